from .tensor import Tensor, concat, no_grad, set_finite_checks, stack
from .params import ParameterStore
from . import ops
from .gradcheck import grad_check

__all__ = ["Tensor", "concat", "no_grad", "set_finite_checks", "stack",
           "ParameterStore", "ops", "grad_check"]
