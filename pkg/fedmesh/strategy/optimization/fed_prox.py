from typing import Tuple

from fedmesh.nets.util.parameters import ParameterVector, axpy, l2_distance_squared


def fedprox_objective(base_loss: float, base_grad: ParameterVector, w_local: ParameterVector,
                      w_global: ParameterVector, mu: float) -> Tuple[float, ParameterVector]:
    """
    Add the proximal term (mu / 2) * ||w_local - w_global||^2 to a local objective and its gradient.
    @param base_loss: Loss of the local objective at `w_local`.
    @type base_loss: float
    @param base_grad: Gradient of the local objective at `w_local`.
    @type base_grad: ParameterVector
    @param w_local: Current local parameters.
    @type w_local: ParameterVector
    @param w_global: Global parameters of the round.
    @type w_global: ParameterVector
    @param mu: Proximal strength, nonnegative.
    @type mu: float
    @return: Proximal loss and gradient.
    @rtype: Tuple[float, ParameterVector]
    """
    if mu < 0:
        raise ValueError(f'mu must be nonnegative, got {mu}')
    if mu == 0:
        return base_loss, base_grad
    loss = base_loss + (mu / 2.0) * l2_distance_squared(w_local, w_global)
    grad = axpy(mu, axpy(-1.0, w_global, w_local), base_grad)
    return loss, grad
