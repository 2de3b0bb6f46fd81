"""Pain scoring from action units, and sampling AU configurations by score.

The PSPI scale combines four facial cues: brow lowering, the stronger of
cheek-raise/lid-tighten, the stronger of nose-wrinkle/lip-raise, and eye
closure, giving an integer score from 0 to 16.
"""

from collections import Counter

from painforge.facesynth import AUVector, pspi_score, sample_au_config

# A moderately painful expression: strong brow lowering, some cheek raise,
# visible upper-lip raise, eyes open.
expression = AUVector(au4=3, au6=2, au7=0, au9=0, au10=2, au43=0)
print(f"AU vector {expression.as_array()} -> PSPI {pspi_score(expression)}")

# Eye closure always adds exactly one level.
closed = AUVector(au4=3, au6=2, au7=0, au9=0, au10=2, au43=1)
print(f"with eye closure -> PSPI {pspi_score(closed)}")

# Sampling is uniform over every integer configuration that hits the target,
# so repeated draws explore the full space of expressions at one pain level.
print("\n1000 draws with target PSPI 8:")
draws = [sample_au_config(8, seed=i) for i in range(1000)]
assert all(pspi_score(v) == 8 for v in draws)
au4_histogram = Counter(int(v.au4) for v in draws)
print("  brow-lowering intensity histogram:", dict(sorted(au4_histogram.items())))

# Score 0 and 16 pin the configuration down almost completely.
print("\nforced configurations:")
print("  PSPI  0:", sample_au_config(0, seed=1).as_array())
print("  PSPI 16:", sample_au_config(16, seed=1).as_array())
