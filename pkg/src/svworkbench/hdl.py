"""Verilog header parsing, construct scanning, and an SVA-subset checker.

The checker is deliberately not a full IEEE 1800 front-end: it covers
single-clock assertions with one optional implication layer, which is the
shape every generated property takes here. Out-of-subset constructs get a
dedicated "unsupported construct" diagnostic so callers can tell them apart
from plain syntax errors. The external simulator remains the final
authority at simulation time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError

# ---------------------------------------------------------------------------
# source masking


def mask_strings_and_comments(source: str) -> str:
    """Replace comment bodies and string contents with spaces, keeping layout."""
    out = list(source)
    i, n = 0, len(source)
    state = "code"
    while i < n:
        c = source[i]
        nxt = source[i + 1] if i + 1 < n else ""
        if state == "code":
            if c == "/" and nxt == "/":
                state = "line"
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c == "/" and nxt == "*":
                state = "block"
                out[i] = out[i + 1] = " "
                i += 2
                continue
            if c == '"':
                state = "string"
                i += 1
                continue
        elif state == "line":
            if c == "\n":
                state = "code"
            else:
                out[i] = " "
        elif state == "block":
            if c == "*" and nxt == "/":
                out[i] = out[i + 1] = " "
                state = "code"
                i += 2
                continue
            if c != "\n":
                out[i] = " "
        elif state == "string":
            if c == '"' and source[i - 1] != "\\":
                state = "code"
            elif c != "\n":
                out[i] = " "
        i += 1
    return "".join(out)


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


# ---------------------------------------------------------------------------
# signal tables


@dataclass
class Port:
    name: str
    direction: str  # input | output | inout
    width: int = 1


@dataclass
class Register:
    name: str
    width: int = 1


@dataclass
class Parameter:
    name: str
    value: str


@dataclass
class SignalTable:
    module_name: str
    ports: list[Port] = field(default_factory=list)
    registers: list[Register] = field(default_factory=list)
    parameters: list[Parameter] = field(default_factory=list)

    def names(self) -> set[str]:
        return (
            {p.name for p in self.ports}
            | {r.name for r in self.registers}
            | {p.name for p in self.parameters}
        )

    def port(self, name: str) -> Port | None:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def width_of(self, name: str) -> int | None:
        p = self.port(name)
        if p:
            return p.width
        for r in self.registers:
            if r.name == name:
                return r.width
        return None


_IDENT = r"[A-Za-z_][A-Za-z0-9_$]*"
_DIRECTIONS = ("input", "output", "inout")


def _find_matching(text: str, open_pos: int, open_char: str = "(", close_char: str = ")") -> int:
    depth = 0
    for i in range(open_pos, len(text)):
        if text[i] == open_char:
            depth += 1
        elif text[i] == close_char:
            depth -= 1
            if depth == 0:
                return i
    line, col = _line_col(text, open_pos)
    raise ParseError(f"unbalanced {open_char!r} opened at {line}:{col}")


def _split_top_commas(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, c in enumerate(text):
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif c == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def parse_verilog_literal(text: str) -> tuple[int, int | None] | None:
    """Parse a Verilog number into (value, declared_width). None if symbolic."""
    text = text.strip().replace("_", "")
    m = re.fullmatch(r"(\d+)?'([bBoOdDhH])([0-9a-fA-F]+)", text)
    if m:
        width = int(m.group(1)) if m.group(1) else None
        base = {"b": 2, "o": 8, "d": 10, "h": 16}[m.group(2).lower()]
        try:
            return int(m.group(3), base), width
        except ValueError:
            return None
    if re.fullmatch(r"\d+", text):
        return int(text), None
    return None


def _resolve_width(range_text: str | None, parameters: list[Parameter]) -> int:
    """Width of a [msb:lsb] range; |msb-lsb|+1 with simple parameter folding."""
    if not range_text:
        return 1
    m = re.match(r"\[\s*(.+?)\s*:\s*(.+?)\s*\]", range_text)
    if not m:
        return 1
    values = []
    env = {}
    for p in parameters:
        lit = parse_verilog_literal(p.value)
        if lit is not None:
            env[p.name] = lit[0]
    for bound in (m.group(1), m.group(2)):
        try:
            values.append(_eval_const(bound, env))
        except ValueError:
            return 1
    return abs(values[0] - values[1]) + 1


def _eval_const(expr: str, env: dict[str, int]) -> int:
    """Fold +,-,* over integers, verilog literals, and known parameter names."""
    tokens = re.findall(rf"{_IDENT}|\d+'[bBoOdDhH][0-9a-fA-F_]+|\d+|[+\-*()]", expr)
    if not tokens or "".join(tokens).replace(" ", "") != expr.replace(" ", ""):
        raise ValueError(f"cannot fold {expr!r}")
    pieces = []
    for tok in tokens:
        if tok in "+-*()":
            pieces.append(tok)
        elif re.fullmatch(_IDENT, tok):
            if tok not in env:
                raise ValueError(f"unknown parameter {tok!r}")
            pieces.append(str(env[tok]))
        else:
            lit = parse_verilog_literal(tok)
            if lit is None:
                raise ValueError(f"bad literal {tok!r}")
            pieces.append(str(lit[0]))
    try:
        return int(eval("".join(pieces), {"__builtins__": {}}, {}))  # folded constants only
    except Exception as exc:
        raise ValueError(str(exc)) from exc


def _check_balance(masked: str) -> None:
    for open_c, close_c in (("(", ")"), ("[", "]"), ("{", "}")):
        depth = 0
        for i, c in enumerate(masked):
            if c == open_c:
                depth += 1
            elif c == close_c:
                depth -= 1
                if depth < 0:
                    line, col = _line_col(masked, i)
                    raise ParseError(f"unbalanced {close_c!r} at {line}:{col}")
        if depth != 0:
            raise ParseError(f"unbalanced {open_c!r}: {depth} unclosed")


def parse_ports(source: str) -> SignalTable:
    """Extract module name, ports, registers, and parameters from Verilog.

    Handles ANSI and non-ANSI port lists, reg/wire/logic declarations,
    ranged widths, and parameter/localparam lines. Comments are stripped
    before parsing.
    """
    if not source.strip():
        raise ParseError("empty source")
    masked = mask_strings_and_comments(source)
    _check_balance(masked)
    m = re.search(rf"\bmodule\s+({_IDENT})", masked)
    if not m:
        raise ParseError("no module keyword found")
    module_name = m.group(1)
    cursor = m.end()

    parameters: list[Parameter] = []

    # optional #( parameter ... ) header
    hash_m = re.match(r"\s*#", masked[cursor:])
    if hash_m:
        open_pos = masked.find("(", cursor + hash_m.end() - 1)
        close_pos = _find_matching(masked, open_pos)
        parameters.extend(_parse_parameter_text(masked[open_pos + 1 : close_pos]))
        cursor = close_pos + 1

    open_pos = masked.find("(", cursor)
    semi_pos = masked.find(";", cursor)
    port_items: list[str] = []
    if open_pos != -1 and (semi_pos == -1 or open_pos < semi_pos):
        close_pos = _find_matching(masked, open_pos)
        port_items = _split_top_commas(masked[open_pos + 1 : close_pos])
        header_end = masked.find(";", close_pos)
    else:
        header_end = semi_pos
    if header_end == -1:
        raise ParseError("module header not terminated with ';'")

    end_m = re.search(r"\bendmodule\b", masked)
    body = masked[header_end + 1 : end_m.start() if end_m else len(masked)]

    # body declarations feed non-ANSI directions, registers, and parameters
    body_dirs: dict[str, tuple[str, str | None]] = {}
    registers: list[Register] = []
    seen_regs: set[str] = set()
    for stmt in body.split(";"):
        stmt = stmt.strip()
        words = re.findall(_IDENT, stmt)
        if not words:
            continue
        # declarations may trail a begin/end keyword on the same statement chunk
        lead = words[0]
        if lead in ("parameter", "localparam"):
            parameters.extend(_parse_parameter_text(stmt))
            continue
        if lead in _DIRECTIONS:
            range_m = re.search(r"\[[^\]]*\]", stmt)
            rng = range_m.group(0) if range_m else None
            for name in words[1:]:
                if name in ("reg", "wire", "logic", "signed"):
                    continue
                body_dirs[name] = (lead, rng)
            continue
        if lead in ("reg", "logic"):
            range_m = re.search(r"\[[^\]]*\]", stmt)
            rng = range_m.group(0) if range_m else None
            width = _resolve_width(rng, parameters)
            for name in words[1:]:
                if name == "signed" or name in seen_regs:
                    continue
                seen_regs.add(name)
                registers.append(Register(name, width))

    ports: list[Port] = []

    def add_port(name: str, direction: str, rng: str | None):
        if any(p.name == name for p in ports):
            return
        ports.append(Port(name, direction, _resolve_width(rng, parameters)))

    carried: tuple[str, str | None] | None = None
    ansi = any(re.match(rf"\s*({'|'.join(_DIRECTIONS)})\b", item) for item in port_items)
    for item in port_items:
        words = re.findall(_IDENT, item)
        if not words:
            continue
        if ansi:
            if words[0] in _DIRECTIONS:
                range_m = re.search(r"\[[^\]]*\]", item)
                carried = (words[0], range_m.group(0) if range_m else None)
                names = [w for w in words[1:] if w not in ("reg", "wire", "logic", "signed")]
            else:
                names = [w for w in words if w not in ("reg", "wire", "logic", "signed")]
            if carried is None:
                continue
            for name in names:
                add_port(name, carried[0], carried[1])
            if "reg" in words:
                for name in names:
                    seen_regs.add(name)
        else:
            # non-ANSI list: names only, direction from body declarations
            for name in words:
                direction, rng = body_dirs.get(name, ("inout", None))
                add_port(name, direction, rng)

    port_names = {p.name for p in ports}
    registers = [r for r in registers if r.name not in port_names]
    return SignalTable(module_name, ports, registers, parameters)


def _parse_parameter_text(text: str) -> list[Parameter]:
    params = []
    cleaned = re.sub(r"\b(parameter|localparam|integer|int|unsigned)\b", " ", text)
    for item in _split_top_commas(cleaned):
        if "=" not in item:
            continue
        name_part, value = item.split("=", 1)
        names = re.findall(_IDENT, name_part)
        if names:
            params.append(Parameter(names[-1], value.strip()))
    return params


# ---------------------------------------------------------------------------
# construct scanning


def identifier_segments(identifier: str) -> list[str]:
    """Lowercased word segments of an identifier, split on '_' and camelCase."""
    spaced = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", identifier)
    return [seg.lower() for seg in re.split(r"[^A-Za-z0-9]+|\s+", spaced) if seg]


CONSTRUCT_SEGMENTS = {
    "debug": {"dbg", "jtag", "debug"},
    "crypto": {"key", "hash", "cipher", "crypt", "crypto"},
    "reset": {"rst", "rstn", "reset", "resetn"},
    "access_control": {"priv", "privilege", "lock", "lockout", "grant", "perm", "acl"},
    "bus": {"axi", "ahb", "apb", "wb", "wishbone", "bus"},
}


def scan_constructs(verilog_source: str) -> set[str]:
    """Keyword/identifier heuristics over the design; deterministic."""
    masked = mask_strings_and_comments(verilog_source)
    identifiers = set(re.findall(_IDENT, masked))
    segments = set()
    for ident in identifiers:
        segments.update(identifier_segments(ident))
    tags = set()
    for tag, seed in CONSTRUCT_SEGMENTS.items():
        if segments & seed:
            tags.add(tag)
    if "case" in identifiers and "state" in segments:
        tags.add("fsm")
    return tags


# ---------------------------------------------------------------------------
# SVA subset checker


@dataclass
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"

    def format(self, filename: str = "<sva>") -> str:
        return f"{filename}:{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass(frozen=True)
class Name:
    parts: tuple[str, ...]
    pos: tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def base(self) -> str:
        return self.parts[0]

    def render(self) -> str:
        return ".".join(self.parts)


@dataclass(frozen=True)
class Literal:
    text: str

    def render(self) -> str:
        return self.text


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"

    def render(self) -> str:
        return f"({self.op}{self.operand.render()})"


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"

    def render(self) -> str:
        return f"({self.lhs.render()} {self.op} {self.rhs.render()})"


Expr = Name | Literal | Unary | Binary


@dataclass
class SvaAssertion:
    clock_edge: str  # pos | neg
    clock: str
    antecedent: Expr
    label: str | None = None
    disable_expr: Expr | None = None
    implication: str | None = None  # "|->" | "|=>"
    consequent: Expr | None = None

    def render(self) -> str:
        head = f"{self.label}: " if self.label else ""
        parts = [f"@({self.clock_edge}edge {self.clock})"]
        if self.disable_expr is not None:
            parts.append(f"disable iff ({self.disable_expr.render()})")
        parts.append(self.antecedent.render())
        if self.implication:
            parts.append(self.implication)
            parts.append(self.consequent.render())
        return f"{head}assert property ({' '.join(parts)});"

    def expressions(self) -> list[Expr]:
        exprs = [self.antecedent]
        if self.disable_expr is not None:
            exprs.append(self.disable_expr)
        if self.consequent is not None:
            exprs.append(self.consequent)
        return exprs


@dataclass
class SvaCheckResult:
    assertion: SvaAssertion | None
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.assertion is not None and not any(
            d.severity == "error" for d in self.diagnostics
        )


_MULTI_TOKENS = ("|->", "|=>", "##", "||", "&&", "==", "!=", "<=", ">=")
_SINGLE_TOKENS = set("()!<>.:;@,#[]&|^~+-*/?={}%")
_UNSUPPORTED_TOKENS = {"##", "[", "]", "#", "~", "^", "+", "-", "*", "/", "?", "{", "}", "%", "="}
_KEYWORDS = {"assert", "property", "posedge", "negedge", "disable", "iff", "endproperty"}


@dataclass
class _Token:
    kind: str  # id | number | sym | systask | error | eof
    text: str
    line: int
    col: int


def _lex_sva(text: str) -> tuple[list[_Token], list[ParseDiagnostic]]:
    tokens: list[_Token] = []
    diagnostics: list[ParseDiagnostic] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        line, col = _line_col(text, i)
        m = re.match(r"\d+'[bBoOdDhH][0-9a-fA-FxXzZ_?]+|\d[\d_]*", text[i:])
        if m:
            tokens.append(_Token("number", m.group(0), line, col))
            i += m.end()
            continue
        m = re.match(_IDENT, text[i:])
        if m:
            tokens.append(_Token("id", m.group(0), line, col))
            i += m.end()
            continue
        if c == "$":
            m = re.match(rf"\$({_IDENT})", text[i:])
            tokens.append(_Token("systask", m.group(0) if m else "$", line, col))
            i += m.end() if m else 1
            continue
        matched = False
        for multi in _MULTI_TOKENS:
            if text.startswith(multi, i):
                tokens.append(_Token("sym", multi, line, col))
                i += len(multi)
                matched = True
                break
        if matched:
            continue
        if c in _SINGLE_TOKENS:
            tokens.append(_Token("sym", c, line, col))
            i += 1
            continue
        diagnostics.append(ParseDiagnostic(line, col, f"unexpected character {c!r}"))
        tokens.append(_Token("error", c, line, col))
        i += 1
    last_line, last_col = _line_col(text, n)
    tokens.append(_Token("eof", "", last_line, last_col))
    return tokens, diagnostics


class _SvaParseFailure(Exception):
    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


class _SvaParser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise _SvaParseFailure(ParseDiagnostic(tok.line, tok.col, message))

    def expect_word(self, word: str):
        tok = self.peek()
        if tok.kind == "id" and tok.text == word:
            return self.advance()
        self.fail(f"syntax error at {tok.text or '<end>'!r}: expected {word!r}", tok)

    def expect_sym(self, sym: str):
        tok = self.peek()
        if tok.kind == "sym" and tok.text == sym:
            return self.advance()
        if tok.kind == "systask" or (tok.kind == "sym" and tok.text in _UNSUPPORTED_TOKENS):
            self.fail(f"unsupported construct {tok.text!r}", tok)
        self.fail(f"syntax error at {tok.text or '<end>'!r}: expected {sym!r}", tok)

    def parse_assertion(self, lenient: bool) -> SvaAssertion:
        label = None
        if (
            self.peek().kind == "id"
            and self.peek().text not in _KEYWORDS
            and self.tokens[self.pos + 1].kind == "sym"
            and self.tokens[self.pos + 1].text == ":"
        ):
            label = self.advance().text
            self.advance()
        self.expect_word("assert")
        self.expect_word("property")
        self.expect_sym("(")
        self.expect_sym("@")
        self.expect_sym("(")
        edge_tok = self.peek()
        if edge_tok.kind == "id" and edge_tok.text in ("posedge", "negedge"):
            self.advance()
        else:
            self.fail(
                f"syntax error at {edge_tok.text or '<end>'!r}: expected posedge or negedge",
                edge_tok,
            )
        clock_tok = self.peek()
        if clock_tok.kind != "id":
            self.fail(f"syntax error at {clock_tok.text or '<end>'!r}: expected clock signal")
        clock = self.advance().text
        self.expect_sym(")")

        disable_expr = None
        if self.peek().kind == "id" and self.peek().text == "disable":
            self.advance()
            self.expect_word("iff")
            self.expect_sym("(")
            disable_expr = self.parse_expr()
            self.expect_sym(")")

        antecedent = self.parse_expr()
        implication = None
        consequent = None
        tok = self.peek()
        if tok.kind == "sym" and tok.text in ("|->", "|=>"):
            implication = self.advance().text
            consequent = self.parse_expr()
        self.expect_sym(")")
        self.expect_sym(";")
        tok = self.peek()
        if lenient and tok.kind == "id" and tok.text == "endproperty":
            self.advance()
        tok = self.peek()
        if tok.kind != "eof":
            self.fail(f"syntax error at {tok.text!r}: trailing input", tok)
        return SvaAssertion(
            clock_edge=edge_tok.text.removesuffix("edge"),
            clock=clock,
            antecedent=antecedent,
            label=label,
            disable_expr=disable_expr,
            implication=implication,
            consequent=consequent,
        )

    # precedence: || < && < == != < relational < unary
    def parse_expr(self) -> Expr:
        return self.parse_or()

    def _parse_binary(self, ops: tuple[str, ...], sub) -> Expr:
        lhs = sub()
        while self.peek().kind == "sym" and self.peek().text in ops:
            op = self.advance().text
            rhs = sub()
            lhs = Binary(op, lhs, rhs)
        return lhs

    def parse_or(self) -> Expr:
        return self._parse_binary(("||",), self.parse_and)

    def parse_and(self) -> Expr:
        return self._parse_binary(("&&",), self.parse_equality)

    def parse_equality(self) -> Expr:
        return self._parse_binary(("==", "!="), self.parse_relational)

    def parse_relational(self) -> Expr:
        return self._parse_binary(("<", "<=", ">", ">="), self.parse_unary)

    def parse_unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == "!":
            self.advance()
            return Unary("!", self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        if tok.kind == "number":
            self.advance()
            self._validate_literal(tok)
            return Literal(tok.text)
        if tok.kind == "id":
            if tok.text in _KEYWORDS:
                self.fail(f"syntax error at {tok.text!r}: keyword in expression", tok)
            parts = [self.advance().text]
            while (
                self.peek().kind == "sym"
                and self.peek().text == "."
                and self.tokens[self.pos + 1].kind == "id"
            ):
                self.advance()
                parts.append(self.advance().text)
            return Name(tuple(parts), pos=(tok.line, tok.col))
        if tok.kind == "systask":
            self.fail(f"unsupported construct {tok.text!r}", tok)
        if tok.kind == "sym" and tok.text in _UNSUPPORTED_TOKENS:
            self.fail(f"unsupported construct {tok.text!r}", tok)
        self.fail(f"syntax error at {tok.text or '<end>'!r}: expected expression", tok)

    def _validate_literal(self, tok: _Token):
        m = re.fullmatch(r"(\d+)?'([bBoOdDhH])([0-9a-fA-FxXzZ_?]+)", tok.text)
        if not m:
            return
        digits = m.group(3).replace("_", "").lower()
        allowed = {
            "b": set("01xz?"),
            "o": set("01234567xz?"),
            "d": set("0123456789"),
            "h": set("0123456789abcdefxz?"),
        }[m.group(2).lower()]
        if not set(digits) <= allowed:
            self.fail(f"bad literal {tok.text!r}: digit outside base", tok)


def check_sva(
    assertion_text: str,
    signal_table: SignalTable | None = None,
    lenient: bool = True,
) -> SvaCheckResult:
    """Parse one assertion in the SVA subset and cross-check its signals.

    Every failure is reported as a diagnostic; this function never raises
    on malformed input.
    """
    tokens, diagnostics = _lex_sva(assertion_text)
    if diagnostics:
        return SvaCheckResult(None, diagnostics)
    parser = _SvaParser(tokens)
    try:
        assertion = parser.parse_assertion(lenient=lenient)
    except _SvaParseFailure as failure:
        return SvaCheckResult(None, [failure.diagnostic])
    except RecursionError:
        return SvaCheckResult(None, [ParseDiagnostic(1, 1, "expression nesting too deep")])

    if signal_table is not None:
        known = signal_table.names()
        if assertion.clock not in known:
            diagnostics.append(
                ParseDiagnostic(1, 1, f"undeclared signal {assertion.clock!r}")
            )
        for expr in assertion.expressions():
            for name in _collect_names(expr):
                if name.base not in known:
                    diagnostics.append(
                        ParseDiagnostic(
                            name.pos[0], name.pos[1], f"undeclared signal {name.base!r}"
                        )
                    )
    if any(d.severity == "error" for d in diagnostics):
        return SvaCheckResult(None, diagnostics)
    return SvaCheckResult(assertion, diagnostics)


def _collect_names(expr: Expr) -> list[Name]:
    if isinstance(expr, Name):
        return [expr]
    if isinstance(expr, Unary):
        return _collect_names(expr.operand)
    if isinstance(expr, Binary):
        return _collect_names(expr.lhs) + _collect_names(expr.rhs)
    return []


def split_sva_blocks(file_text: str) -> list[str]:
    """Split an .sva file into one text block per assert statement."""
    masked = mask_strings_and_comments(file_text)
    blocks = []
    for m in re.finditer(r"\bassert\b", masked):
        start = m.start()
        depth = 0
        end = None
        for i in range(start, len(masked)):
            c = masked[i]
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
            elif c == ";" and depth == 0:
                end = i + 1
                break
        if end is None:
            end = len(masked)
        tail = re.match(r"\s*endproperty", masked[end:])
        if tail:
            end += tail.end()
        blocks.append(masked[start:end].strip())
    return blocks


def check_sva_file(
    file_text: str, signal_table: SignalTable | None = None, lenient: bool = True
) -> list[SvaCheckResult]:
    return [check_sva(block, signal_table, lenient) for block in split_sva_blocks(file_text)]


# ---------------------------------------------------------------------------
# testbench structural checks


@dataclass
class TestbenchCheck:
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


_CLOCK_TOGGLE_RE = re.compile(r"always\s*#\s*\d+\s+(\w+)\s*=\s*[~!]\s*\1\b")
_LOGGING_RE = re.compile(r"\$(strobe|display|monitor|fwrite|fdisplay)\b")
_DECL_RE = re.compile(r"^\s*(?:reg|wire|logic|integer|real)\b[^;]*", re.MULTILINE)
_ASSIGN_RE = re.compile(r"(?:^|;|\bbegin\b)\s*(?:#\s*\d+\s+)?([A-Za-z_]\w*)\s*(<=|=)(?!=)")


def check_testbench_syntax(
    testbench_source: str, dut_table: SignalTable | None = None
) -> TestbenchCheck:
    """Structural checks sufficient for the generation loop; not a simulator."""
    diags: list[ParseDiagnostic] = []
    masked = mask_strings_and_comments(testbench_source)

    words = re.findall(rf"{_IDENT}", masked)
    n_module = words.count("module")
    n_endmodule = words.count("endmodule")
    if n_module == 0:
        diags.append(ParseDiagnostic(1, 1, "missing module declaration"))
    elif n_module != n_endmodule:
        diags.append(ParseDiagnostic(1, 1, "unbalanced module/endmodule"))

    n_begin = words.count("begin")
    n_end = words.count("end")
    if n_begin != n_end:
        diags.append(ParseDiagnostic(1, 1, f"unbalanced begin/end ({n_begin} vs {n_end})"))

    if not _CLOCK_TOGGLE_RE.search(masked):
        diags.append(ParseDiagnostic(1, 1, "no clock toggle block (always #N clk = ~clk)"))

    if not _LOGGING_RE.search(masked):
        diags.append(ParseDiagnostic(1, 1, "no logging statement ($strobe/$display/$monitor)"))

    declared: dict[str, int] = {}
    for m in _DECL_RE.finditer(masked):
        line = masked.count("\n", 0, m.start()) + 1
        for name in re.findall(_IDENT, m.group(0))[1:]:
            if name not in ("signed",):
                declared.setdefault(name, line)

    loop_keywords = {"if", "else", "for", "while", "case", "begin", "end", "initial", "always",
                     "assign", "module", "endmodule", "posedge", "negedge", "parameter",
                     "localparam", "reg", "wire", "logic", "integer", "real", "input", "output"}
    for m in _ASSIGN_RE.finditer(masked):
        name = m.group(1)
        if name in loop_keywords:
            continue
        line = masked.count("\n", 0, m.start(1)) + 1
        if name not in declared:
            diags.append(ParseDiagnostic(line, 1, f"signal {name!r} driven but never declared"))
        elif declared[name] > line:
            diags.append(
                ParseDiagnostic(line, 1, f"signal {name!r} driven before its declaration")
            )

    if dut_table is not None:
        inst_re = re.compile(rf"\b({re.escape(dut_table.module_name)})\s+({_IDENT})\s*\(")
        m = inst_re.search(masked)
        if m is None:
            diags.append(
                ParseDiagnostic(1, 1, f"no instantiation of DUT {dut_table.module_name!r}")
            )
        else:
            open_pos = masked.find("(", m.end() - 1)
            try:
                close_pos = _find_matching(masked, open_pos)
            except ParseError:
                close_pos = len(masked) - 1
            conn_text = masked[open_pos + 1 : close_pos]
            port_names = {p.name for p in dut_table.ports}
            connections = re.findall(rf"\.\s*({_IDENT})\s*\(([^)]*)\)", conn_text)
            if len(connections) > len(dut_table.ports):
                diags.append(
                    ParseDiagnostic(
                        masked.count("\n", 0, m.start()) + 1,
                        1,
                        f"instantiation connects {len(connections)} ports; DUT has "
                        f"{len(dut_table.ports)}",
                    )
                )
            for port, signal in connections:
                line = masked.count("\n", 0, m.start()) + 1
                if port not in port_names:
                    diags.append(ParseDiagnostic(line, 1, f"unknown port {port!r} on DUT"))
                sig_ids = re.findall(_IDENT, signal)
                if sig_ids and sig_ids[0] not in declared and not parse_verilog_literal(signal):
                    diags.append(
                        ParseDiagnostic(
                            line, 1, f"port {port!r} connected to undeclared {sig_ids[0]!r}"
                        )
                    )
    return TestbenchCheck(diags)
