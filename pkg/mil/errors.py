class MilError(Exception):
    pass


class FormatError(MilError):
    """
    A feature, label or model file could not be parsed.
    """

    def __init__(self, message, path=None, expected_bytes=None):
        self.path = str(path) if path is not None else None
        self.expected_bytes = expected_bytes
        detail = []
        if self.path is not None:
            detail.append(self.path)
        if expected_bytes is not None:
            detail.append('expected %d bytes' % expected_bytes)
        if detail:
            message = "%s (%s)" % (message, ', '.join(detail))
        super().__init__(message)


class IncompatibleVersionError(FormatError):
    def __init__(self, path, found, supported):
        self.found = found
        self.supported = supported
        super().__init__("File format version %d is not supported, this build reads version %d" % (
            found, supported), path=path)


class DatasetError(MilError):
    """
    Bags are missing or inconsistent with each other. `bag_ids` lists the offenders.
    """

    def __init__(self, message, bag_ids=()):
        self.bag_ids = list(bag_ids)
        if self.bag_ids:
            shown = ', '.join(self.bag_ids[:10])
            if len(self.bag_ids) > 10:
                shown += ', ... (%d in total)' % len(self.bag_ids)
            message = "%s (%s)" % (message, shown)
        super().__init__(message)


class ConfigurationError(MilError):
    pass


class ModelStateError(MilError):
    pass


class UndefinedMetricError(MilError, ValueError):
    pass
