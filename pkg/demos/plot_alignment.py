"""
Segmenting an utterance against its label sequence
==================================================

Three frames, two labels. We compare the summed probability of every
segmentation with the single best one.
"""

import math

import numpy as np

from mac_forge.align import brute_force_logprob, count_segmentations, forward_logprob, viterbi_segment
from mac_forge.emissions import EmissionMatrix

############################################################
# Frame posteriors for labels A (column 0) and B (column 1)

probs = np.array([[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]])
em = EmissionMatrix(np.log(probs))
seq = (0, 1)

############################################################
# Two ways to split three frames between A and B: A|BB and AA|B

print("segmentations:", count_segmentations(3, 2))
print("marginal     :", math.exp(forward_logprob(em, seq)))      # .288 + .432
print("enumerated   :", math.exp(brute_force_logprob(em, seq)))

seg, score = viterbi_segment(em, seq)
print("best         :", seg.boundaries, math.exp(score))

############################################################
# A minimum segment length shrinks the search space

em7 = EmissionMatrix(np.log(np.full((7, 3), 1 / 3)))
for m in (1, 2):
    seg, _ = viterbi_segment(em7, (0, 1, 2), min_seg_frames=m)
    print(f"m={m}: {count_segmentations(7, 3, m):2d} candidates, best {seg.boundaries}")
