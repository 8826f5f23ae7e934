"""Audio-based hit song prediction: log-mel features, six regression
networks, hit-score targets and ranking evaluation."""

__version__ = "0.1.0"
