from fedmesh.nets.util.parameters import ParameterVector, weighted_mean
from fedmesh.util.config.definitions import MergeMode


def _loss_weights(v_r: float, v_s: float):
    if v_r < 0 or v_s < 0:
        raise ValueError(f'validation losses must be nonnegative, got v_r={v_r}, v_s={v_s}')
    if v_r + v_s == 0:
        raise ValueError('validation losses v_r and v_s are both zero, cannot weight the merge')
    return v_r, v_s


def _inverse_weights(v_r: float, v_s: float):
    if v_r <= 0 or v_s <= 0:
        raise ValueError(f'inverse weighting needs positive validation losses, got v_r={v_r}, v_s={v_s}')
    return 1.0 / v_r, 1.0 / v_s


def gcml_merge(w_r: ParameterVector, w_s: ParameterVector, v_r: float, v_s: float,
               mode: MergeMode = MergeMode.loss_weighted) -> ParameterVector:
    """
    Merge the receiver's and the sender's updated models, weighted by their validation losses on the receiver's
    validation split.
    @param w_r: Receiver model after the mutual-learning step.
    @type w_r: ParameterVector
    @param w_s: Incoming sender model after the mutual-learning step.
    @type w_s: ParameterVector
    @param v_r: Validation loss of `w_r`.
    @type v_r: float
    @param v_s: Validation loss of `w_s`.
    @type v_s: float
    @param mode: `loss_weighted` weights by the raw losses, `inverse` by their reciprocals.
    @type mode: MergeMode
    @return: Merged model, a per-coordinate convex combination of both inputs.
    @rtype: ParameterVector
    """
    weights = {
        MergeMode.loss_weighted: _loss_weights,
        MergeMode.inverse: _inverse_weights,
    }[MergeMode(mode)](float(v_r), float(v_s))
    return weighted_mean(zip((w_r, w_s), weights))
