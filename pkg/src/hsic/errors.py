"""Exception hierarchy shared by all hsic modules."""


class HsicError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HsicError):
    """A file does not conform to one of the hsic on-disk formats."""


class BadMagic(FormatError):
    pass


class HeaderFieldMissing(FormatError):
    pass


class SizeMismatch(FormatError):
    pass


class ValueOutOfRange(HsicError):
    pass


class IoFailure(HsicError):
    pass


class SpecInvalid(HsicError):
    pass


class DimMismatch(HsicError):
    pass


class LengthMismatch(HsicError):
    pass


class InvalidSigma(HsicError):
    pass


class OctaveTooSmall(HsicError):
    pass


class EmptyGallery(HsicError):
    pass


class NoTrainingPairs(HsicError):
    pass


class NaNLoss(HsicError):
    """Training loss became NaN; carries the epoch index."""

    def __init__(self, epoch: int):
        super().__init__(f"loss became NaN at epoch {epoch}")
        self.epoch = epoch
