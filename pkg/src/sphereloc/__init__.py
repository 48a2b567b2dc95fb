"""360-degree visual relative localization.

Subpackages by capability:

- geometry   spherical coordinates, rotations, quaternions
- partition  sphere covering by circular caps and cap-count selection
- rectify    equirectangular -> pinhole view extraction
- images     PPM/PNG image I/O
- fiducial   square marker codec, detector, and pose estimation
- tracker    partition-search tracking over panoramic frames
- sim        synthetic spherical scenes with ground truth
"""

__version__ = "0.1.0"
