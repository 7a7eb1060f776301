from __future__ import annotations

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_DATA = 3


class KeyscopeError(RuntimeError):
    exit_status = EXIT_RUNTIME

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ConfigError(KeyscopeError):
    exit_status = EXIT_USAGE


class DataError(KeyscopeError):
    exit_status = EXIT_DATA


class ShapeError(DataError):
    pass


class LabelError(DataError):
    def __init__(self, text: str, detail: str = ""):
        message = f"Unparseable key label {text!r}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__("bad_label", message)
        self.text = text


class AudioFormatError(DataError):
    pass


class ManifestError(DataError):
    def __init__(self, code: str, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(code, message)
        self.line = line


class CheckpointError(KeyscopeError):
    pass


class TrainingDivergedError(KeyscopeError):
    def __init__(self, epoch: int, batch: int, learning_rate: float, loss: float):
        super().__init__(
            "non_finite_loss",
            f"Loss became non-finite ({loss}) at epoch={epoch} batch={batch} lr={learning_rate:g}",
        )
        self.epoch = epoch
        self.batch = batch
        self.learning_rate = learning_rate


def exit_status_for(exc: BaseException) -> int:
    if isinstance(exc, KeyscopeError):
        return exc.exit_status
    return EXIT_RUNTIME
