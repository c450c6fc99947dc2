class MILError(Exception):
    """
    Base class for every error raised by the toolkit.
    """


class ConfigurationError(MILError, ValueError):
    """
    Invalid settings, layer chains, fold requests or command-line options.
    """


class DomainError(MILError, ValueError):
    """
    An argument outside the mathematical domain of an operation
    (empty bag, label not in {0, 1}, single-class AUC, ...).
    """


class IngestionError(MILError, IOError):
    """
    An image or manifest that cannot be read or does not fit the protocol.
    """


class OracleError(MILError, ArithmeticError):
    """
    The finite-difference oracle evaluated a non-finite function value.
    """


class InternalError(MILError, RuntimeError):
    """
    Broken internal contract, e.g. a backward pass fed a foreign cache.
    """


class DivergenceError(MILError, ArithmeticError):
    """
    Training produced a non-finite loss.

    Attributes:
        epoch (int): Epoch in which the loss diverged.
        bag_id (str): Bag whose loss was not finite.
    """

    def __init__(self, epoch: int, bag_id: str, loss: float):
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}, bag '{bag_id}'")
        self.epoch = epoch
        self.bag_id = bag_id
        self.loss = loss


class FoldError(MILError, RuntimeError):
    """
    A cross-validation fold failed; wraps the original error.

    Attributes:
        fold (int): Index of the failing fold.
    """

    def __init__(self, fold: int, cause: Exception | str):
        super().__init__(f"Fold {fold} failed: {cause}")
        self.fold = fold
        self.cause = str(cause)

    def __reduce__(self):
        return (self.__class__, (self.fold, self.cause))
