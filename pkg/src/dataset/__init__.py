"""
dataset/
Stereo samples on disk and in memory.
- pfm.py: grayscale PFM maps
- images.py: 8-bit PNG/PGM images via Pillow
- calibration.py: rig calibration files and disparity-to-depth
- manifest.py: tab-separated sample lists
- synthetic.py: random-dot stereograms
"""
