"""Regression on path signatures for nowcasting irregular, mixed-frequency data."""
from .sigcore import (
    Path,
    SignatureTransformer,
    TruncatedSignature,
    chen_product,
    filter_terms,
    levy_area,
    segment_signature,
    signature,
    term_count,
)

__version__ = "0.1.0"
