"""
RRESM endoscopic stereo matching: group-wise correlation, coordinate
attention with a bidirectional selective scan, and Haar-domain refinement.
"""
