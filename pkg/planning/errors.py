class ScenarioError(ValueError):
    """A scenario document or profile value violates a documented invariant.

    ``field`` is the dotted path of the offending value when it is known, so
    callers can report ``pair.acceptance_rate: must be < 1`` style messages.
    """

    def __init__(self, message: str, field: str | None = None, rule: str | None = None):
        super().__init__(message)
        self.field = field
        self.rule = rule or message


class InvariantError(AssertionError):
    """An internal result broke one of its own guarantees."""


def require(condition: bool, field: str, rule: str) -> None:
    if not condition:
        raise ScenarioError(f"{field}: {rule}", field=field, rule=rule)
