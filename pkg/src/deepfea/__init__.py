"""Desk-scale surrogate pipeline for transient finite-element analysis.

Subpackages: meshes (grid/load/tensor encoding), fem (explicit ground-truth
solver), autodiff + kernels (reverse-mode engine over compiled or NumPy
convolution kernels), convlstm + network (the rollout model), training
(scheduled-sampling optimization), metrics, storage, cli.
"""

__version__ = "0.1.0"
