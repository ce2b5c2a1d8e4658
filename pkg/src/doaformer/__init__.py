"""Sound-source direction-of-arrival estimation on 2-mic array audio.

STFT log-magnitude/phase features feed a ResNet + dual-axis gating frontend,
then a stack of sequence layers combining squeeze-excitation feedforwards,
self-attention, time-shift convolution, and a bidirectional selective
state-space block. Training uses permutation-invariant MSE on per-frame
Cartesian direction vectors over synthetic moving-source scenes.
"""

__version__ = "0.1.0"
