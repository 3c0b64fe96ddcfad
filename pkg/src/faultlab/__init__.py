"""faultlab: physics-informed IPMSM fault waveforms and a from-scratch 1-D CNN
diagnostic classifier, with dataset tooling, training, and evaluation."""

__version__ = "0.1.0"
