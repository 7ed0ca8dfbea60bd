"""Combining the co-occurrence pattern with aliasing-relation evidence."""

from . import autodiff as ad

FUSION_MODES = ("sum", "learn")


def fuse_sum(pattern, ar_embedding, rate: float):
    """``pattern + rate * ar_embedding``."""
    pattern, ar_embedding = ad.as_tensor(pattern), ad.as_tensor(ar_embedding)
    if pattern.shape != ar_embedding.shape:
        raise ad.ShapeError(f"fuse_sum: widths {pattern.shape} and {ar_embedding.shape}")
    return pattern + ad.scale(ar_embedding, rate)


def alignment_loss(pattern, ar_embedding) -> ad.Tensor:
    """MSE pulling ``pattern`` toward the (constant) AR embedding."""
    target = ar_embedding.data if isinstance(ar_embedding, ad.Tensor) else ar_embedding
    pattern = ad.as_tensor(pattern)
    if pattern.shape != ad.as_tensor(target).shape:
        raise ad.ShapeError(f"alignment_loss: widths {pattern.shape} and {target.shape}")
    return ad.mse(pattern, ad.Tensor(target))
