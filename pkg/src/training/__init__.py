"""
training/
- loss.py: smooth-L1 per stage and the weighted total
- loader.py: threaded random-crop loader
- trainer.py: Adam training loop and loss-curve output
"""
