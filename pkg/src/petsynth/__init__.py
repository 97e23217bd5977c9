"""Language-conditioned 3D GAN for amyloid-PET synthesis from T1 MRI."""

__version__ = "0.1.0"
