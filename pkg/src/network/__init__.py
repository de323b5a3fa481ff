"""
network/
The stereo network and its stages.
- feature_net.py: siamese encoder/decoder producing 1/4-resolution features
- cost_volume.py: group-wise correlation volume
- mca.py: coordinate attention with a bidirectional selective scan
- aggregation.py: 3D U-Net aggregation, soft-argmax and upsampling
- hfdo.py: Haar-domain residual refinement
- pipeline.py: the assembled RRESMNet
"""
