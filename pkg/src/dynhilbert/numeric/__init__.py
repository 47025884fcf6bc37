from .field import I, INV_SQRT2, ONE, SQRT2, ZERO, FieldError, FieldScalar, field_arith
from .interval import RatInterval, interval_arith, real_field_interval, sqrt2_enclosure
from .linalg import (
    CMatrix,
    EigenCluster,
    MatrixError,
    NumericBudgetError,
    charpoly,
    determinant,
    inner,
    op_norm,
    op_norm_squared,
    unitary_eigs,
    vector_norm2,
)
