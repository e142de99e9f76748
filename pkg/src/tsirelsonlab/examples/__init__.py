"""Runnable demonstrations and the acceptance manifest."""
