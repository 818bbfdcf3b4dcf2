class StochBondError(Exception):
    pass


class DegenerateCoefficientsError(StochBondError, ValueError):
    pass


class SingularSystemError(StochBondError, ValueError):
    pass


class HypothesisError(StochBondError, ValueError):
    """A structural precondition on the coefficients does not hold."""


class MembershipError(StochBondError, ValueError):
    """A shift violates V . theta = a_t."""


class RankDeficientError(StochBondError, ValueError):
    pass


class StabilityError(StochBondError, ValueError):
    pass


class GridExtrapolationWarning(UserWarning):
    pass


class EffectiveSampleSizeWarning(UserWarning):
    pass


class IntegrabilityWarning(UserWarning):
    pass


class HypothesisWarning(UserWarning):
    pass
