"""
Exceptions shared across the nowcast library
"""
from typing import Dict, Optional


class NowcastError(Exception):
    """Base class for all nowcast errors"""
    pass


class InvalidArgumentError(NowcastError, ValueError):
    """Exception raised when an argument violates an operation precondition"""
    pass


class OutOfRangeError(InvalidArgumentError):
    """Exception raised when a value falls outside a configured range"""
    def __init__(self, message: str, joint_index: Optional[int] = None):
        """
        Initialize the OutOfRangeError

        Keyword arguments:
        message -- the error message
        joint_index -- the index of the offending joint, if any (default: None)
        """
        self.joint_index = joint_index

        if joint_index is not None:
            message = f"joint {joint_index}: {message}"

        super().__init__(message)


class BehindCameraError(InvalidArgumentError):
    """Exception raised when projecting a point that is not in front of the camera"""
    pass


class ConfigError(NowcastError):
    """Exception raised for invalid or incompatible configuration"""
    pass


class DatasetIOError(NowcastError):
    """Exception raised when a dataset file cannot be read or written"""
    def __init__(self, message: str, path: str):
        """
        Initialize the DatasetIOError

        Keyword arguments:
        message -- the error message
        path -- the offending path
        """
        self.path = path

        super().__init__(f"'{path}': {message}")


class DatasetParseError(NowcastError):
    """Exception raised when a dataset file is malformed"""
    def __init__(self, message: str, path: str, offset: int = 0):
        """
        Initialize the DatasetParseError

        Keyword arguments:
        message -- the error message
        path -- the offending path
        offset -- the byte offset where parsing failed (default: 0)
        """
        self.path = path

        self.offset = offset

        super().__init__(f"'{path}' at byte {offset}: {message}")


class EmptyEvaluationError(NowcastError):
    """Exception raised when no jointly valid joints are available for a metric"""
    pass


class AugmentationRejected(NowcastError):
    """Exception raised when an augmentation pushes too many joints out of the frustum"""
    pass


class NonFiniteLossError(NowcastError):
    """Exception raised when training produces a non-finite loss"""
    def __init__(self, epoch: int, batch: int, components: Dict[str, float]):
        """
        Initialize the NonFiniteLossError

        Keyword arguments:
        epoch -- the epoch in which the loss diverged
        batch -- the batch index within the epoch
        components -- the individual loss values
        """
        self.epoch = epoch

        self.batch = batch

        self.components = components

        details = ", ".join(f"{name}={value}" for name, value in components.items())

        super().__init__(f"Non-finite loss at epoch {epoch}, batch {batch}: {details}")


class CheckpointError(NowcastError):
    """Exception raised when a checkpoint cannot be read, written or applied"""
    def __init__(self, message: str, path: Optional[str] = None):
        """
        Initialize the CheckpointError

        Keyword arguments:
        message -- the error message
        path -- the checkpoint path (default: None)
        """
        self.path = path

        super().__init__(f"Checkpoint '{path}': {message}" if path else f"Checkpoint: {message}")
