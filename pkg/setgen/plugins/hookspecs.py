"""
Plugin hook specifications.

Defines the interfaces that similarity plugins must implement.
"""
import pluggy

hookspec = pluggy.HookspecMarker("setgen")
hookimpl = pluggy.HookimplMarker("setgen")


class SimilaritySpec:
    """Hook specifications for similarity plugins."""

    @hookspec
    def get_info(self):
        """
        Get plugin information.

        Returns:
            dict: Plugin metadata (name, description, version)
        """

    @hookspec
    def dissimilarity(self, a, b):
        """
        Dissimilarity between two same-shape image tensors.

        Args:
            a: Tensor [B, C, spatial...]
            b: Tensor of the same shape

        Returns:
            Tensor: Nonnegative scalar, zero for identical inputs
        """
