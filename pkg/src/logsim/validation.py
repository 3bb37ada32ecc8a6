"""Small input-validation helpers used by the public entry points."""

from __future__ import annotations

from typing import Any, Iterable

from .errors import ConfigError


def require(condition: bool, message: str, exc: type[Exception] = ConfigError) -> None:
    if not condition:
        raise exc(message)


def as_text_list(X: Iterable[Any], what: str = "X") -> list[str]:
    """Materialize an iterable of log lines, rejecting non-string items."""
    texts = list(X)
    for pos, item in enumerate(texts):
        if not isinstance(item, str):
            raise ConfigError(f"{what}[{pos}] is {type(item).__name__}, expected str")
    return texts


def check_fitted(estimator: Any, attribute: str = "store_") -> None:
    """Raise sklearn's NotFittedError if ``fit`` has not been called."""
    if getattr(estimator, attribute, None) is None:
        from sklearn.exceptions import NotFittedError

        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; "
            "call fit() with known-normal logs first."
        )
