"""Generative product attribute-value identification.

Three strategies are supported: a two-model pipeline (value extraction
followed by attribute generation), a single prefixed multitask model, and an
end-to-end model that emits flattened attribute-value pairs directly.
"""

from avgen.pairs import AttrValuePair, normalize_pair
from avgen.ingest import ProductRecord

__all__ = ["AttrValuePair", "ProductRecord", "normalize_pair"]
__version__ = "0.1.0"
