"""Exception hierarchy shared by every layer of the protocol stack."""


class ProtocolError(Exception):
    """Base class for all errors raised by trustshare."""


class DecryptError(ProtocolError):
    """An envelope could not be opened with the supplied key."""


class MalformedMessage(ProtocolError):
    """Plaintext did not parse under the canonical framing."""


class AuthError(ProtocolError):
    """The claimed source could not be authenticated."""


class UnknownAgency(AuthError, KeyError):
    """No agency with the given id is registered.

    Subclasses AuthError because, on the wire, an unresolvable source id is
    an authentication failure like any other.
    """

    def __str__(self) -> str:
        return Exception.__str__(self)


class IntegrityError(ProtocolError):
    """A recomputed MD5 digest did not match the transmitted one."""


class TargetAuthError(ProtocolError):
    """The response's mapping value does not match the pair's mapping function."""


class SessionMismatch(ProtocolError):
    """The echoed nonce does not belong to this session."""


class UnknownCategory(ProtocolError):
    """A request did not name a terrorist code the target can resolve."""


class DuplicateAgency(ProtocolError):
    pass


class StoreError(ProtocolError):
    """Invalid value offered to the trust store."""


class ParseError(StoreError):
    """A store or scenario file failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GatewayError(ProtocolError):
    pass


class DuplicateUser(GatewayError):
    pass


class NotAuthenticated(GatewayError):
    pass


class NotAuthorized(GatewayError):
    pass


class UnknownCode(GatewayError):
    pass


#: Errors an honest peer may legitimately observe when a message was tampered.
TAMPER_ERRORS = (
    DecryptError,
    MalformedMessage,
    AuthError,
    IntegrityError,
    TargetAuthError,
    SessionMismatch,
)
