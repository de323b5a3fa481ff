"""
utils/
- atomic.py: temp-file-then-rename writers used for every artifact
"""
