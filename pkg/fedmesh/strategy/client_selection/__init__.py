from .dropout import DropoutState, dropout_step
from .pairing import RoundPairing, pair_active_sites
