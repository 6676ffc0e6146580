"""mocl-seg test suite."""
