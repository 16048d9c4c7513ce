"""Activation-aware bidding of an electrolyzer into day-ahead, FCR and mFRR markets."""

__version__ = "0.1.0"
