"""
Normalized cross-correlation similarity plugin.

Global NCC per batch element; the dissimilarity is 1 - NCC averaged over
the batch, so identical images score 0 and anti-correlated ones 2.
"""
from setgen.errors import ShapeError
from setgen.plugins.hookspecs import hookimpl
from setgen.tensor import as_tensor, mean, sqrt, square

EPSILON = 1e-8


def ncc_dissimilarity(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f'cannot compare shapes {a.shape} and {b.shape}', dimension='shape')
    axes = tuple(range(1, a.ndim))
    da = a - mean(a, axis=axes, keepdims=True)
    db = b - mean(b, axis=axes, keepdims=True)
    cross = mean(da * db, axis=axes)
    norm = sqrt(mean(square(da), axis=axes) * mean(square(db), axis=axes) + EPSILON)
    return mean(1.0 - cross / norm)


class NCCSimilarityPlugin:
    """Plugin exposing 1 - global normalized cross-correlation."""

    @hookimpl
    def get_info(self):
        """Get plugin information."""
        return {
            'name': 'ncc',
            'display_name': 'Normalized cross-correlation',
            'description': 'One minus the global normalized cross-correlation',
            'version': '1.0.0',
            'category': 'similarity',
        }

    @hookimpl
    def dissimilarity(self, a, b):
        return ncc_dissimilarity(a, b)
