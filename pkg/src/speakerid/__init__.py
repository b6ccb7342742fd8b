"""Text-dependent speaker identification with cepstral features and a
neuro-genetic (GA + backpropagation) perceptron classifier."""

__version__ = "0.1.0"
