"""Bridge-specific exception types."""


class BridgeError(Exception):
    """Base class for trainer errors."""


class EmptyCorpus(BridgeError):
    pass


class ModelLoadError(BridgeError):
    pass


class RewardServiceUnreachable(BridgeError):
    pass


class NonFiniteLoss(BridgeError):
    pass
