from dual_level_forecaster.gradcore.tensor import Tensor, TapeNode, backward, first_non_finite, branch_recorder
from dual_level_forecaster.gradcore.optim import AdamState, adam_step
from dual_level_forecaster.gradcore.gradcheck import grad_check, GradCheckReport

__all__ = ['Tensor', 'TapeNode', 'backward', 'first_non_finite', 'branch_recorder',
           'AdamState', 'adam_step', 'grad_check', 'GradCheckReport']
