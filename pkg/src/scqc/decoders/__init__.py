from .base import (
    InnerDecoder, check_defects, correction_parity, correction_weight, validate_correction, validate_rows,
)
from .oracle import MAX_DEFECTS, OracleDecoder, oracle_min_weight_match, shortest_paths
from .unionfind import UnionFindDecoder, uf_decode

DECODERS = {"uf": UnionFindDecoder, "oracle": OracleDecoder}

__all__ = [
    "DECODERS", "InnerDecoder", "MAX_DEFECTS", "OracleDecoder", "UnionFindDecoder",
    "check_defects", "correction_parity", "correction_weight", "oracle_min_weight_match",
    "shortest_paths", "uf_decode", "validate_correction", "validate_rows",
]
