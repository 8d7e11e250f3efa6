import contextlib


@contextlib.contextmanager
def open_target(path):
    """Open ``path`` for text writing; file-like objects pass through unchanged."""
    if hasattr(path, "write"):
        yield path
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with fh:
        yield fh
