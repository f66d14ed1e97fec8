"""Single-image reflection separation: a dilated fully convolutional network
on hypercolumn-augmented inputs, trained with feature, adversarial and
gradient-exclusion losses, plus the synthetic compositor and PSNR/SSIM
evaluation harness around it.
"""

__version__ = "0.1.0"
