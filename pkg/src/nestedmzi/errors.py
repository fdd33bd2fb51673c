"""Exception types shared across the package."""


class MZIError(Exception):
    """Base class for all errors raised by nestedmzi."""


class UnknownParameterError(MZIError, KeyError):
    """An override or lookup named a parameter the circuit does not declare."""

    def __init__(self, name, valid):
        self.name = name
        self.valid = tuple(sorted(valid))
        listing = ", ".join(self.valid) if self.valid else "(none)"
        super().__init__(f"unknown parameter {name!r}; valid parameters: {listing}")

    def __str__(self):
        return self.args[0]


class UnboundParameterError(MZIError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"parameter {name!r} is not bound")

    def __str__(self):
        return self.args[0]


class UnknownDetectorError(MZIError, KeyError):
    def __init__(self, name, subsystem=None):
        self.name = name
        where = f" on subsystem {subsystem!r}" if subsystem else ""
        super().__init__(f"unknown detector {name!r}{where}")

    def __str__(self):
        return self.args[0]


class UnknownCutError(MZIError, KeyError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"unknown cut {label!r}")

    def __str__(self):
        return self.args[0]


class InvalidCircuitError(MZIError, ValueError):
    """Raised when an operation needs a validated circuit and gets a bad one."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"invalid circuit: {lines}")


class PhysicsError(MZIError):
    """Conditioning on an event of (numerically) zero probability."""


class PostSelectionImpossible(PhysicsError):
    pass


class ZeroOverlap(PhysicsError):
    pass
