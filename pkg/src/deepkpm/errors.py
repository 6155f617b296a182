"""Exception hierarchy. Every error carries the module tag used by the CLI."""


class DeepKPMError(Exception):
    module = "deepkpm"


class SceneParseError(DeepKPMError):
    module = "scene"

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class SceneValidationError(DeepKPMError):
    module = "scene"


class ConfigurationError(DeepKPMError):
    module = "config"


class PhotonFileError(DeepKPMError):
    module = "photons"


class PhotonMagicError(PhotonFileError):
    pass


class PhotonVersionError(PhotonFileError):
    pass


class PhotonTruncatedError(PhotonFileError):
    pass


class QueryError(DeepKPMError):
    module = "knn"


class EstimationError(DeepKPMError):
    module = "density"


class KernelDomainError(EstimationError, ValueError):
    pass


class NumericError(DeepKPMError):
    module = "neural"

    def __init__(self, layer, message="non-finite activations"):
        super().__init__(f"{message} in layer {layer!r}")
        self.layer = layer


class DivergenceError(DeepKPMError):
    module = "neural"

    def __init__(self, step, loss):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class ShapeMismatchError(DeepKPMError, ValueError):
    module = "neural"


class DatasetError(DeepKPMError):
    module = "neural"


class CheckpointError(DeepKPMError):
    module = "checkpoint"


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError, ShapeMismatchError):
    pass


class ImageError(DeepKPMError):
    module = "image"


class DimensionMismatchError(ImageError, ValueError):
    pass
