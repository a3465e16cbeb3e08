"""Exception types shared across the package."""


class BamError(Exception):
    """Base class for all package-specific errors."""


class DuplicateNodeError(BamError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"duplicate node: {node!r}")


class UnknownEndpointError(BamError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"link endpoint is not a declared node: {node!r}")


class SelfLinkError(BamError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"self-link not allowed: {node!r}")


class UnknownLinkError(BamError):
    def __init__(self, link):
        self.link = link
        super().__init__(f"no such directed link: {link[0]!r} -> {link[1]!r}")


class UnknownRequestError(BamError):
    def __init__(self, request_id):
        self.request_id = request_id
        super().__init__(f"no active grant for request: {request_id!r}")


class ParseError(BamError):
    """A scenario file line could not be parsed."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        self.message = message
        super().__init__(f"line {line_no}: {message}")


class SemanticError(BamError):
    """A scenario parsed but violates a semantic rule."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        self.message = message
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + message)
