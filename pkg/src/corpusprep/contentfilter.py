"""Extraction-artifact stripping, blocklist rejection and PII masking."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .documents import Document, FilterDecision


class RuleConfigError(Exception):
    """A filter rule file or pattern is unusable; raised at startup."""


# -- artifact line rules -----------------------------------------------------

# Rule patterns are matched per line with re.search; anchor them explicitly.
DEFAULT_ARTIFACT_RULES: list[dict[str, str]] = [
    {
        "name": "short_no_letters",
        # under 4 chars and not a single Unicode letter in the line
        "pattern": r"^(?!.*[^\W\d_]).{0,3}$",
        "scope": "line",
    },
    {
        "name": "menu_separators",
        "pattern": r"^[\s|»/·]+$",
        "scope": "line",
    },
    {
        "name": "navbar_pair",
        # two short pipe-separated segments, the classic "Home | Contact" line
        "pattern": r"^\s*[^|\n]{1,30}\|[^|\n]{1,30}$",
        "scope": "line",
    },
]


@dataclass(frozen=True)
class ArtifactRule:
    name: str
    pattern: re.Pattern[str]
    scope: str = "line"


def compile_artifact_rules(raw_rules: list[dict]) -> list[ArtifactRule]:
    """Compile rule dicts ({name, pattern, scope}), naming the rule on error."""
    rules = []
    for raw in raw_rules:
        name = raw.get("name", "<unnamed>")
        scope = raw.get("scope", "line")
        if scope != "line":
            raise RuleConfigError(f"artifact rule {name!r}: unsupported scope {scope!r}")
        try:
            pattern = re.compile(raw["pattern"])
        except (KeyError, re.error) as exc:
            raise RuleConfigError(f"artifact rule {name!r}: invalid pattern ({exc})") from exc
        rules.append(ArtifactRule(name=name, pattern=pattern, scope=scope))
    return rules


def default_artifact_rules() -> list[ArtifactRule]:
    return compile_artifact_rules(DEFAULT_ARTIFACT_RULES)


def strip_artifacts(text: str, rules: list[ArtifactRule]) -> str:
    """Drop every line matched by any rule, preserving the order of the rest."""
    kept = [
        line
        for line in text.split("\n")
        if not any(rule.pattern.search(line) for rule in rules)
    ]
    return "\n".join(kept)


# -- blocklist ---------------------------------------------------------------


@dataclass
class Blocklist:
    """Lowercase terms: whole-word matched in content, substring matched in URLs."""

    content_terms: frozenset[str] = frozenset()
    url_terms: frozenset[str] = frozenset()
    _content_re: re.Pattern[str] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        for term in list(self.content_terms) + list(self.url_terms):
            if not term or term != term.lower() or any(c.isspace() for c in term):
                raise RuleConfigError(
                    f"blocklist term {term!r} must be non-empty, lowercase, whitespace-free"
                )
        if self.content_terms:
            alternation = "|".join(re.escape(t) for t in sorted(self.content_terms))
            object.__setattr__(
                self, "_content_re", re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)
            )

    def content_match(self, text: str) -> str | None:
        if self._content_re is None:
            return None
        m = self._content_re.search(text)
        return m.group(0).lower() if m else None

    def url_match(self, url: str) -> str | None:
        lowered = url.lower()
        for term in sorted(self.url_terms):
            if term in lowered:
                return term
        return None


def load_blocklist(path: str | Path) -> Blocklist:
    """Parse a blocklist file: one term per line, # comments, [content]/[url] sections."""
    content: set[str] = set()
    urls: set[str] = set()
    section = "content"
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in ("[content]", "[url]"):
            section = line[1:-1]
            continue
        if line.startswith("["):
            raise RuleConfigError(f"{path}:{lineno}: unknown section {line!r}")
        term = line.lower()
        if any(c.isspace() for c in term):
            raise RuleConfigError(f"{path}:{lineno}: term {raw!r} contains whitespace")
        (content if section == "content" else urls).add(term)
    return Blocklist(content_terms=frozenset(content), url_terms=frozenset(urls))


def blocklist_filter(doc: Document, blocklist: Blocklist) -> FilterDecision:
    """Remove the document when a content term (whole word) or URL term (substring) hits."""
    reasons: list[str] = []
    metadata: dict = {}
    content_hit = blocklist.content_match(doc.text)
    if content_hit is not None:
        reasons.append("blocklist_content")
        metadata["matched_term"] = content_hit
    url_hit = blocklist.url_match(doc.url)
    if url_hit is not None:
        reasons.append("blocklist_url")
        metadata.setdefault("matched_term", url_hit)
        metadata["matched_url_term"] = url_hit
    return FilterDecision(
        id=doc.id,
        stage="content_filter",
        kept=not reasons,
        reasons=reasons,
        metadata=metadata,
    )


# -- PII masking --------------------------------------------------------------

EMAIL_PATTERN = r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9](?:[A-Za-z0-9.-]*[A-Za-z0-9])?\.[A-Za-z]{2,}\b"
# scheme or www. prefix; final char may not be closing punctuation so trailing
# sentence periods survive masking
URL_PATTERN = r'(?:https?://|www\.)[^\s<>"«»()\[\]{}]+[^\s<>"«»()\[\]{}.,!?;:]'
# Romanian numbering: +40/0040 country code or 0-prefixed national number,
# nine digits after the prefix with optional single separators
PHONE_PATTERN = r"(?<![\w.+-])(?:(?:\+|00)40[ .\-]?|0)[237](?:[ .\-]?\d){8}(?!\d)"

DEFAULT_REPLACEMENT_TOKENS = {
    "email": "<EMAIL_ADDRESS>",
    "url": "<URL>",
    "phone": "<PHONE_NUMBER>",
}


@dataclass
class PiiRuleSet:
    """Compiled PII patterns and their replacement tokens.

    Matching is non-overlapping left-to-right with precedence
    email > url > phone at equal start positions.
    """

    email_pattern: str = EMAIL_PATTERN
    url_pattern: str = URL_PATTERN
    phone_pattern: str = PHONE_PATTERN
    replacement_tokens: dict[str, str] = field(
        default_factory=lambda: dict(DEFAULT_REPLACEMENT_TOKENS)
    )
    _combined: re.Pattern[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        parts = {
            "email": self.email_pattern,
            "url": self.url_pattern,
            "phone": self.phone_pattern,
        }
        try:
            compiled = {cat: re.compile(pat) for cat, pat in parts.items()}
        except re.error as exc:
            raise RuleConfigError(f"invalid PII pattern: {exc}") from exc
        for cat, pat in compiled.items():
            token = self.replacement_tokens[cat]
            if pat.search(token):
                raise RuleConfigError(
                    f"replacement token {token!r} is matched by its own {cat} pattern"
                )
        self._combined = re.compile(
            "|".join(f"(?P<{cat}>{pat})" for cat, pat in parts.items())
        )


def default_pii_rules() -> PiiRuleSet:
    return PiiRuleSet()


def mask_pii(text: str, rules: PiiRuleSet | None = None) -> tuple[str, dict[str, int]]:
    """Replace emails, URLs and phone numbers with their tokens.

    Returns the masked text and per-category match counts. Text outside the
    matched spans is preserved byte for byte.
    """
    if rules is None:
        rules = default_pii_rules()
    counts = {"email": 0, "url": 0, "phone": 0}
    parts: list[str] = []
    last = 0
    for m in rules._combined.finditer(text):
        category = m.lastgroup
        assert category is not None
        parts.append(text[last : m.start()])
        parts.append(rules.replacement_tokens[category])
        counts[category] += 1
        last = m.end()
    parts.append(text[last:])
    return "".join(parts), counts
