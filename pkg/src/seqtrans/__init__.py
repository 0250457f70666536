"""End-to-end sequence transduction toolkit: CTC, attention, RNN-transducer
and joint CTC-attention models with LM fusion and error scoring."""

__version__ = "0.1.0"
