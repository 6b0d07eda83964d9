"""highwaynet: gated feedforward networks with hand-derived backprop.

A small numpy-based library for building and training deep networks whose
layers blend a learned transform with an identity carry path through a
sigmoid transform gate, plus the experiment tooling (SGD training, random
hyperparameter search, dataset loaders, gate introspection) used to study
how these networks optimize at depth.
"""

__version__ = "0.1.0"
