"""Encrypted dynamic controllers over Z_q with a power-of-two modulus."""
__version__ = "0.1.0"
