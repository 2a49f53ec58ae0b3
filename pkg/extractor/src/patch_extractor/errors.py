"""Error taxonomy for the extraction pipeline."""


class ExtractorError(Exception):
    """Base class; .code is the class name for machine-readable output."""

    @property
    def code(self) -> str:
        return type(self).__name__


class BackboneLoadFailure(ExtractorError):
    pass


class BadImage(ExtractorError):
    pass


class InvalidConfig(ExtractorError):
    pass


class NonFiniteTokens(ExtractorError):
    pass


class DatasetLayout(ExtractorError):
    pass
