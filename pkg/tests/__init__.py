"""
FOSR Test Suite
"""
