"""Emotion analysis and contributor churn prediction for issue trackers and mailing lists."""

__version__ = "0.1.0"
