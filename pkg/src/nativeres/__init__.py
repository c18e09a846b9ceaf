"""Native-resolution vision-language substrate.

Resolution/aspect-ratio taxonomy, dataset balance analysis, token budgeting
with 2x2 merging, Patch n' Pack sequence packing, a desk-scale reference
encoder for verifying attention isolation, and a resolution-centric
evaluation protocol.
"""

__version__ = "0.1.0"
