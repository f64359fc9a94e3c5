"""APT attribution as a Markov decision process, learned with a from-scratch DQN."""

__version__ = "0.1.0"
