# Tests for pc2
