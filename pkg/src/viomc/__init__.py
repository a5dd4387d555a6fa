"""Monte-Carlo workbench for an EKF-based monocular VIO estimator under
controlled feature-track perturbations and IMU imperfections."""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
