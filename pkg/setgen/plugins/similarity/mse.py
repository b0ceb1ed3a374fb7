"""
Mean squared error similarity plugin.
"""
from setgen.errors import ShapeError
from setgen.plugins.hookspecs import hookimpl
from setgen.tensor import as_tensor, mean, square


def mse(a, b):
    """Mean over all elements of (a - b)^2."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f'cannot compare shapes {a.shape} and {b.shape}', dimension='shape')
    return mean(square(a - b))


class MSESimilarityPlugin:
    """Plugin exposing voxelwise mean squared error."""

    @hookimpl
    def get_info(self):
        """Get plugin information."""
        return {
            'name': 'mse',
            'display_name': 'Mean squared error',
            'description': 'Mean over voxels of the squared intensity difference',
            'version': '1.0.0',
            'category': 'similarity',
        }

    @hookimpl
    def dissimilarity(self, a, b):
        return mse(a, b)
