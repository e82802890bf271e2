"""Recognition alphabet shared by recognition, synthgen and evaluation."""
from __future__ import annotations

import string
from dataclasses import dataclass, field

LETTERS = string.ascii_lowercase
DIGITS = string.digits
# hyphen, comma and question mark are named in the source material; the
# remaining four are common overlay punctuation.
SPECIALS = "-,?'.:!"


@dataclass(frozen=True)
class Charset:
    symbols: str = LETTERS + DIGITS + SPECIALS
    _lookup: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("charset symbols must be unique")
        if any(c.isspace() or not c.isprintable() for c in self.symbols):
            raise ValueError("charset may not contain whitespace or control characters")
        object.__setattr__(self, "_lookup", frozenset(self.symbols))

    def __contains__(self, ch: str) -> bool:
        return ch in self._lookup

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def specials(self) -> str:
        return "".join(c for c in self.symbols if not c.isalnum())

    @property
    def digits(self) -> str:
        return "".join(c for c in self.symbols if c.isdigit())

    def restrict(self, text: str) -> str:
        """Lowercase ``text`` and drop every symbol outside the charset."""
        lookup = self._lookup
        return "".join(c for c in text.lower() if c in lookup)


DEFAULT_CHARSET = Charset()
