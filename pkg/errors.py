class SalemError(Exception):
  """Base error; carries the CLI exit code and a JSON payload."""

  exit_code = 1
  status_code = 422

  def __init__(self, message, **diagnostics):
    super().__init__(message)
    self.message = message
    self.diagnostics = diagnostics

  def to_dict(self):
    payload = {"error": self.message}
    payload.update(self.diagnostics)
    return payload


class InputError(SalemError):
  exit_code = 2
  status_code = 400


class ConstructionFailure(SalemError):
  exit_code = 1

  def __init__(self, message, stage=None, **diagnostics):
    super().__init__(message, **diagnostics)
    self.stage = stage

  def to_dict(self):
    payload = super().to_dict()
    if self.stage is not None:
      payload["stage"] = self.stage
    return payload


class DegenerateOverlapError(ConstructionFailure):
  pass


class ResourceError(SalemError):
  exit_code = 3


class DemoError(SalemError):
  exit_code = 1
