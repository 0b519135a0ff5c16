"""Parsers for ontology files and the metamodel JSON export.

Ontologies arrive as N-Triples or a Turtle subset (prefixes, ``a``, ``;``/``,``
continuations, literals, blank-node labels).  Metamodel documents are lifted
into RDF so both sides of the alignment share one graph representation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

from .graph import (
    RDF_PROPERTY,
    RDF_TYPE,
    RDFS_CLASS,
    RDFS_COMMENT,
    RDFS_DOMAIN,
    RDFS_LABEL,
    RDFS_RANGE,
    XSD_NS,
    BlankNode,
    Graph,
    Iri,
    Literal,
    Term,
    Triple,
)

logger = logging.getLogger(__name__)

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"

PRIMITIVE_KINDS = ("string", "number", "boolean", "date")
CARDINALITIES = ("one", "any")

XSD_FOR_KIND = {
    "string": XSD_NS + "string",
    "number": XSD_NS + "double",
    "boolean": XSD_NS + "boolean",
    "date": XSD_NS + "dateTime",
}


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"  # "error" | "warning"

    def __str__(self) -> str:
        return f"{self.severity} at {self.line}:{self.column}: {self.message}"


class ParseError(ValueError):
    """Raised in strict mode, or for unrecoverable syntax errors."""

    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class MetamodelError(ValueError):
    """Invalid metamodel document (schema violation or dangling reference)."""


# --------------------------------------------------------------------------
# N-Triples
# --------------------------------------------------------------------------

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _LineScanner:
    """Character scanner over one line, tracking the column for diagnostics."""

    def __init__(self, text: str, line_no: int):
        self.text = text
        self.pos = 0
        self.line_no = line_no

    def error(self, message: str) -> ParseError:
        return ParseError(ParseDiagnostic(self.line_no, self.pos + 1, message))

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while not self.eof() and self.text[self.pos] in " \t":
            self.pos += 1

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def _unescape_into(self, out: list[str]) -> None:
        self.pos += 1  # consume backslash
        if self.eof():
            raise self.error("dangling escape")
        ch = self.text[self.pos]
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
            self.pos += 1
        elif ch == "u" or ch == "U":
            width = 4 if ch == "u" else 8
            hexpart = self.text[self.pos + 1 : self.pos + 1 + width]
            if len(hexpart) != width:
                raise self.error("truncated \\%s escape" % ch)
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError:
                raise self.error("invalid \\%s escape" % ch) from None
            self.pos += 1 + width
        else:
            raise self.error(f"unknown escape \\{ch}")

    def read_iri(self) -> Iri:
        self.expect("<")
        out: list[str] = []
        while True:
            if self.eof():
                raise self.error("unterminated IRI")
            ch = self.text[self.pos]
            if ch == ">":
                self.pos += 1
                break
            if ch == "\\":
                self._unescape_into(out)
            else:
                out.append(ch)
                self.pos += 1
        try:
            return Iri("".join(out))
        except ValueError as exc:
            raise self.error(str(exc)) from None

    def read_blank(self) -> BlankNode:
        self.expect("_")
        self.expect(":")
        start = self.pos
        while not self.eof() and (self.peek().isalnum() or self.peek() in "_-."):
            self.pos += 1
        if self.pos == start:
            raise self.error("empty blank node label")
        return BlankNode(self.text[start : self.pos])

    def read_string_body(self) -> str:
        self.expect('"')
        out: list[str] = []
        while True:
            if self.eof():
                raise self.error("unterminated string literal")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                self._unescape_into(out)
            else:
                out.append(ch)
                self.pos += 1

    def read_literal(self) -> Literal:
        body = self.read_string_body()
        if self.peek() == "@":
            self.pos += 1
            start = self.pos
            while not self.eof() and (self.peek().isalnum() or self.peek() == "-"):
                self.pos += 1
            if self.pos == start:
                raise self.error("empty language tag")
            return Literal(body, language=self.text[start : self.pos])
        if self.text[self.pos : self.pos + 2] == "^^":
            self.pos += 2
            return Literal(body, datatype=self.read_iri())
        return Literal(body)


def _parse_ntriples_line(scanner: _LineScanner) -> Triple:
    scanner.skip_ws()
    ch = scanner.peek()
    if ch == "<":
        subject: Iri | BlankNode = scanner.read_iri()
    elif ch == "_":
        subject = scanner.read_blank()
    else:
        raise scanner.error("expected IRI or blank node as subject")
    scanner.skip_ws()
    if scanner.peek() != "<":
        raise scanner.error("expected IRI as predicate")
    predicate = scanner.read_iri()
    scanner.skip_ws()
    ch = scanner.peek()
    obj: Term
    if ch == "<":
        obj = scanner.read_iri()
    elif ch == "_":
        obj = scanner.read_blank()
    elif ch == '"':
        obj = scanner.read_literal()
    else:
        raise scanner.error("expected IRI, blank node, or literal as object")
    scanner.skip_ws()
    scanner.expect(".")
    scanner.skip_ws()
    if not scanner.eof() and scanner.peek() != "#":
        raise scanner.error("trailing content after '.'")
    return Triple(subject, predicate, obj)


def parse_ntriples(
    text: str, strict: bool = True, diagnostics: list[ParseDiagnostic] | None = None
) -> Graph:
    """Parse N-Triples text into a sealed graph.

    Malformed lines abort in strict mode; in lenient mode each is skipped and
    recorded as a warning in ``diagnostics``.
    """
    graph = Graph()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        scanner = _LineScanner(raw, line_no)
        try:
            graph.add_triple(_parse_ntriples_line(scanner))
        except ParseError as exc:
            if strict:
                raise
            warning = replace(exc.diagnostic, severity="warning")
            if diagnostics is not None:
                diagnostics.append(warning)
            logger.warning("skipping malformed N-Triples line: %s", warning)
    return graph.seal()


# --------------------------------------------------------------------------
# Turtle subset
# --------------------------------------------------------------------------

_PUNCT = {".", ";", ",", "[", "]", "(", ")"}


@dataclass(frozen=True)
class _Token:
    kind: str  # iri | pname | blank | string | langtag | dtmarker | punct | word
    value: str
    line: int
    column: int


class _TurtleLexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def _error(self, message: str, line: int | None = None, col: int | None = None) -> ParseError:
        return ParseError(
            ParseDiagnostic(line if line is not None else self.line,
                            col if col is not None else self.col, message)
        )

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos < len(self.text):
                if self.text[self.pos] == "\n":
                    self.line += 1
                    self.col = 1
                else:
                    self.col += 1
                self.pos += 1

    def _peek(self, offset: int = 0) -> str:
        idx = self.pos + offset
        return self.text[idx] if idx < len(self.text) else ""

    def _skip_ws_and_comments(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self._advance()
            elif ch == "#":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self._advance()
            else:
                return

    def _read_quoted(self, quote: str) -> str:
        # caller has verified the opening quote(s); handles both short and
        # long ("""...""") forms
        long_form = self.text[self.pos : self.pos + 3] == quote * 3
        self._advance(3 if long_form else 1)
        out: list[str] = []
        while True:
            if self.pos >= len(self.text):
                raise self._error("unterminated string literal")
            ch = self.text[self.pos]
            if long_form:
                if self.text[self.pos : self.pos + 3] == quote * 3:
                    self._advance(3)
                    return "".join(out)
            elif ch == quote:
                self._advance()
                return "".join(out)
            elif ch == "\n":
                raise self._error("newline in short string literal")
            if ch == "\\":
                self._advance()
                esc = self._peek()
                if esc in _ESCAPES:
                    out.append(_ESCAPES[esc])
                    self._advance()
                elif esc in ("u", "U"):
                    width = 4 if esc == "u" else 8
                    hexpart = self.text[self.pos + 1 : self.pos + 1 + width]
                    if len(hexpart) != width:
                        raise self._error(f"truncated \\{esc} escape")
                    try:
                        out.append(chr(int(hexpart, 16)))
                    except ValueError:
                        raise self._error(f"invalid \\{esc} escape") from None
                    self._advance(1 + width)
                else:
                    raise self._error(f"unknown escape \\{esc}")
            else:
                out.append(ch)
                self._advance()

    def next_token(self) -> _Token | None:
        self._skip_ws_and_comments()
        if self.pos >= len(self.text):
            return None
        line, col = self.line, self.col
        ch = self.text[self.pos]
        if ch == "<":
            if self._peek(1) == "<":
                raise self._error("quoted triples (<<...>>) are not supported", line, col)
            out: list[str] = []
            self._advance()
            while True:
                if self.pos >= len(self.text):
                    raise self._error("unterminated IRI", line, col)
                c = self.text[self.pos]
                if c == ">":
                    self._advance()
                    break
                if c == "\\":
                    self._advance()
                    esc = self._peek()
                    if esc in ("u", "U"):
                        width = 4 if esc == "u" else 8
                        hexpart = self.text[self.pos + 1 : self.pos + 1 + width]
                        try:
                            out.append(chr(int(hexpart, 16)))
                        except ValueError:
                            raise self._error(f"invalid \\{esc} escape") from None
                        self._advance(1 + width)
                    else:
                        raise self._error(f"unknown IRI escape \\{esc}")
                else:
                    out.append(c)
                    self._advance()
            return _Token("iri", "".join(out), line, col)
        if ch in ('"', "'"):
            return _Token("string", self._read_quoted(ch), line, col)
        if ch == "@":
            self._advance()
            start = self.pos
            while self._peek().isalpha() or self._peek() == "-":
                self._advance()
            word = self.text[start : self.pos]
            if word in ("prefix", "base"):
                return _Token("word", "@" + word, line, col)
            if not word:
                raise self._error("empty language tag", line, col)
            return _Token("langtag", word, line, col)
        if ch == "^" and self._peek(1) == "^":
            self._advance(2)
            return _Token("dtmarker", "^^", line, col)
        if ch == "_" and self._peek(1) == ":":
            self._advance(2)
            start = self.pos
            while self._peek().isalnum() or self._peek() in "_-.":
                self._advance()
            if self.pos == start:
                raise self._error("empty blank node label", line, col)
            return _Token("blank", self.text[start : self.pos], line, col)
        if ch in _PUNCT:
            self._advance()
            return _Token("punct", ch, line, col)
        # bare word: prefixed name, keyword, number, or boolean
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ' \t\r\n"<^@,;()[]#':
            self._advance()
        word = self.text[start : self.pos]
        # trailing dots always terminate the statement (pnames and numbers
        # never end with '.' in the Turtle grammar)
        while word.endswith("."):
            word = word[:-1]
            self.pos -= 1
            self.col -= 1
        if not word:
            raise self._error(f"unexpected character {ch!r}", line, col)
        if ":" in word:
            return _Token("pname", word, line, col)
        return _Token("word", word, line, col)


_XSD_INTEGER = Iri(XSD_NS + "integer")
_XSD_DECIMAL = Iri(XSD_NS + "decimal")
_XSD_DOUBLE = Iri(XSD_NS + "double")
_XSD_BOOLEAN = Iri(XSD_NS + "boolean")


class _TurtleParser:
    def __init__(self, text: str):
        self.lexer = _TurtleLexer(text)
        self.prefixes: dict[str, str] = {}
        self.graph = Graph()
        self._pushed: _Token | None = None

    def _next(self) -> _Token | None:
        if self._pushed is not None:
            tok, self._pushed = self._pushed, None
            return tok
        return self.lexer.next_token()

    def _push(self, tok: _Token) -> None:
        self._pushed = tok

    def _error(self, tok: _Token | None, message: str) -> ParseError:
        if tok is None:
            return ParseError(ParseDiagnostic(self.lexer.line, self.lexer.col, message))
        return ParseError(ParseDiagnostic(tok.line, tok.column, message))

    def _expect_punct(self, value: str) -> None:
        tok = self._next()
        if tok is None or tok.kind != "punct" or tok.value != value:
            raise self._error(tok, f"expected {value!r}")

    def _expand_pname(self, tok: _Token) -> Iri:
        prefix, _, local = tok.value.partition(":")
        if prefix not in self.prefixes:
            raise self._error(tok, f"undeclared prefix {prefix!r}")
        try:
            return Iri(self.prefixes[prefix] + local)
        except ValueError as exc:
            raise self._error(tok, str(exc)) from None

    def _parse_directive(self, keyword: _Token) -> None:
        sparql_style = keyword.value == "PREFIX"
        name_tok = self._next()
        if name_tok is None or name_tok.kind != "pname" or not name_tok.value.endswith(":"):
            raise self._error(name_tok, "expected prefix name ending in ':'")
        iri_tok = self._next()
        if iri_tok is None or iri_tok.kind != "iri":
            raise self._error(iri_tok, "expected namespace IRI")
        self.prefixes[name_tok.value[:-1]] = iri_tok.value
        if not sparql_style:
            self._expect_punct(".")

    def _term_from(self, tok: _Token, position: str) -> Term:
        if tok.kind == "iri":
            try:
                return Iri(tok.value)
            except ValueError as exc:
                raise self._error(tok, str(exc)) from None
        if tok.kind == "pname":
            return self._expand_pname(tok)
        if tok.kind == "blank":
            return BlankNode(tok.value)
        if tok.kind == "punct" and tok.value in ("[", "("):
            construct = "anonymous blank node" if tok.value == "[" else "collection"
            raise self._error(tok, f"{construct} ({tok.value}...) is not supported")
        if position == "object":
            if tok.kind == "string":
                return self._finish_literal(tok)
            if tok.kind == "word":
                return self._scalar_literal(tok)
        raise self._error(tok, f"unexpected token {tok.value!r} in {position} position")

    def _finish_literal(self, tok: _Token) -> Literal:
        nxt = self._next()
        if nxt is not None and nxt.kind == "langtag":
            return Literal(tok.value, language=nxt.value)
        if nxt is not None and nxt.kind == "dtmarker":
            dt_tok = self._next()
            if dt_tok is None or dt_tok.kind not in ("iri", "pname"):
                raise self._error(dt_tok, "expected datatype IRI after '^^'")
            dt = Iri(dt_tok.value) if dt_tok.kind == "iri" else self._expand_pname(dt_tok)
            return Literal(tok.value, datatype=dt)
        if nxt is not None:
            self._push(nxt)
        return Literal(tok.value)

    def _scalar_literal(self, tok: _Token) -> Literal:
        word = tok.value
        if word in ("true", "false"):
            return Literal(word, datatype=_XSD_BOOLEAN)
        try:
            int(word)
            return Literal(word, datatype=_XSD_INTEGER)
        except ValueError:
            pass
        try:
            float(word)
        except ValueError:
            raise self._error(tok, f"unexpected token {word!r} in object position") from None
        datatype = _XSD_DOUBLE if ("e" in word.lower()) else _XSD_DECIMAL
        return Literal(word, datatype=datatype)

    def _parse_triples(self, first: _Token) -> None:
        subject = self._term_from(first, "subject")
        while True:
            verb_tok = self._next()
            if verb_tok is None:
                raise self._error(None, "unexpected end of input in predicate list")
            if verb_tok.kind == "word" and verb_tok.value == "a":
                predicate = Iri(RDF_TYPE)
            else:
                pred_term = self._term_from(verb_tok, "predicate")
                if not isinstance(pred_term, Iri):
                    raise self._error(verb_tok, "predicate must be an IRI")
                predicate = pred_term
            while True:
                obj_tok = self._next()
                if obj_tok is None:
                    raise self._error(None, "unexpected end of input in object list")
                obj = self._term_from(obj_tok, "object")
                self.graph.add_triple(Triple(subject, predicate, obj))  # type: ignore[arg-type]
                sep = self._next()
                if sep is None:
                    raise self._error(None, "statement not terminated with '.'")
                if sep.kind == "punct" and sep.value == ",":
                    continue
                break
            if sep.kind == "punct" and sep.value == ";":
                # allow trailing ';' before '.'
                peek = self._next()
                if peek is not None and peek.kind == "punct" and peek.value == ".":
                    return
                if peek is not None:
                    self._push(peek)
                continue
            if sep.kind == "punct" and sep.value == ".":
                return
            raise self._error(sep, f"expected ';', ',' or '.', found {sep.value!r}")

    def parse(self) -> Graph:
        while True:
            tok = self._next()
            if tok is None:
                return self.graph.seal()
            if tok.kind == "word" and tok.value in ("@prefix", "PREFIX"):
                self._parse_directive(tok)
            elif tok.kind == "word" and tok.value in ("@base", "BASE"):
                raise self._error(tok, "@base directives are not supported")
            else:
                self._parse_triples(tok)


def parse_turtle(text: str) -> Graph:
    """Parse the supported Turtle subset into a sealed graph."""
    return _TurtleParser(text).parse()


def parse_ontology(path: str, text: str) -> Graph:
    """Dispatch on file extension: .nt -> N-Triples, anything else -> Turtle."""
    if path.endswith(".nt"):
        return parse_ntriples(text)
    return parse_turtle(text)


# --------------------------------------------------------------------------
# Metamodel JSON documents
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str  # one of PRIMITIVE_KINDS


@dataclass(frozen=True)
class ReferenceSpec:
    name: str
    target: str
    cardinality: str  # one of CARDINALITIES


@dataclass(frozen=True)
class ClassSpec:
    name: str
    description: str = ""
    attributes: tuple[AttributeSpec, ...] = ()
    references: tuple[ReferenceSpec, ...] = ()
    semantic_reference: str | None = None


@dataclass(frozen=True)
class MetamodelDocument:
    name: str
    classes: tuple[ClassSpec, ...] = ()

    def class_named(self, name: str) -> ClassSpec | None:
        for cls in self.classes:
            if cls.name == name:
                return cls
        return None


def load_metamodel(text: str) -> MetamodelDocument:
    """Parse and validate the metamodel JSON export format."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetamodelError(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("name"), str):
        raise MetamodelError("document must be an object with a string 'name'")
    classes: list[ClassSpec] = []
    seen_names: set[str] = set()
    for c in raw.get("classes", []):
        name = c.get("name")
        if not isinstance(name, str) or not name:
            raise MetamodelError("every class needs a non-empty string 'name'")
        if name in seen_names:
            raise MetamodelError(f"duplicate class name {name!r}")
        seen_names.add(name)
        attrs: list[AttributeSpec] = []
        attr_names: set[str] = set()
        for a in c.get("attributes", []):
            if a.get("type") not in PRIMITIVE_KINDS:
                raise MetamodelError(
                    f"class {name!r}: attribute {a.get('name')!r} has invalid type "
                    f"{a.get('type')!r}"
                )
            if a["name"] in attr_names:
                raise MetamodelError(f"class {name!r}: duplicate attribute {a['name']!r}")
            attr_names.add(a["name"])
            attrs.append(AttributeSpec(a["name"], a["type"]))
        refs: list[ReferenceSpec] = []
        for r in c.get("references", []):
            if r.get("cardinality") not in CARDINALITIES:
                raise MetamodelError(
                    f"class {name!r}: reference {r.get('name')!r} has invalid "
                    f"cardinality {r.get('cardinality')!r}"
                )
            refs.append(ReferenceSpec(r["name"], r["target"], r["cardinality"]))
        classes.append(
            ClassSpec(
                name=name,
                description=c.get("description", "") or "",
                attributes=tuple(attrs),
                references=tuple(refs),
                semantic_reference=c.get("semantic_reference"),
            )
        )
    doc = MetamodelDocument(name=raw["name"], classes=tuple(classes))
    for cls in doc.classes:
        for ref in cls.references:
            if doc.class_named(ref.target) is None:
                raise MetamodelError(
                    f"class {cls.name!r}: reference {ref.name!r} targets unknown "
                    f"class {ref.target!r}"
                )
    return doc


def metamodel_to_json(doc: MetamodelDocument) -> str:
    """Serialize back to the export schema (stable key order, 2-space indent)."""
    out: dict = {"name": doc.name, "classes": []}
    for cls in doc.classes:
        entry: dict = {"name": cls.name}
        if cls.description:
            entry["description"] = cls.description
        entry["attributes"] = [{"name": a.name, "type": a.kind} for a in cls.attributes]
        entry["references"] = [
            {"name": r.name, "target": r.target, "cardinality": r.cardinality}
            for r in cls.references
        ]
        if cls.semantic_reference is not None:
            entry["semantic_reference"] = cls.semantic_reference
        out["classes"].append(entry)
    return json.dumps(out, indent=2, ensure_ascii=False) + "\n"


def _namespace_base(namespace: str) -> str:
    return namespace if namespace.endswith(("#", "/")) else namespace + "#"


def metamodel_to_rdf(doc: MetamodelDocument, namespace: str = "http://metamodel") -> Graph:
    """Lift a metamodel document into an RDF graph.

    Every class becomes an rdfs:Class with label and optional comment; every
    attribute and reference becomes an rdf:Property with one rdfs:domain and
    one rdfs:range.  Property IRIs are class-qualified (``ns#Class_prop``) so
    same-named attributes on different classes stay distinct.
    """
    ns = _namespace_base(namespace)
    rdf_type, rdfs_class = Iri(RDF_TYPE), Iri(RDFS_CLASS)
    rdf_property = Iri(RDF_PROPERTY)
    rdfs_label, rdfs_comment = Iri(RDFS_LABEL), Iri(RDFS_COMMENT)
    rdfs_domain, rdfs_range = Iri(RDFS_DOMAIN), Iri(RDFS_RANGE)
    graph = Graph()
    for cls in doc.classes:
        class_iri = Iri(ns + cls.name)
        graph.add(class_iri, rdf_type, rdfs_class)
        graph.add(class_iri, rdfs_label, Literal(cls.name))
        if cls.description:
            graph.add(class_iri, rdfs_comment, Literal(cls.description))
        for attr in cls.attributes:
            prop = Iri(f"{ns}{cls.name}_{attr.name}")
            graph.add(prop, rdf_type, rdf_property)
            graph.add(prop, rdfs_domain, class_iri)
            graph.add(prop, rdfs_range, Iri(XSD_FOR_KIND[attr.kind]))
        for ref in cls.references:
            if doc.class_named(ref.target) is None:
                raise MetamodelError(
                    f"class {cls.name!r}: reference {ref.name!r} targets unknown "
                    f"class {ref.target!r}"
                )
            prop = Iri(f"{ns}{cls.name}_{ref.name}")
            graph.add(prop, rdf_type, rdf_property)
            graph.add(prop, rdfs_domain, class_iri)
            graph.add(prop, rdfs_range, Iri(ns + ref.target))
    return graph.seal()
