"""
lexparse.py
===========

Tokenizes C source and builds the lightweight structural model the embedded
rules work on:

- tokenize(): lossless ply-based lexer. Every token keeps the whitespace that
  precedes it, so the original text can be rebuilt byte for byte.
- parse_translation_unit(): functions, file-scope variables, include-guard
  facts, and per-function calls, loops, reads and writes. The parser is total:
  on code it does not understand it skips to the next top-level item and
  reports a parseError diagnostic.
- classify_isr(): decides which functions are interrupt service routines.

There is no preprocessor. Includes are recorded, macros stay identifiers, and
both branches of conditional compilation are parsed.
"""

import logging
import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Iterable

import ply.lex as lex
from ply.lex import TOKEN

from .diagnostics import LEX_ERROR, PARSE_ERROR, Diagnostic

logger = logging.getLogger(__name__)

# Token kinds
IDENTIFIER = "identifier"
KEYWORD = "keyword"
LITERAL = "literal"
PUNCTUATOR = "punctuator"
DIRECTIVE = "directive"
COMMENT = "comment"

KEYWORDS = frozenset(
    {
        "auto", "break", "case", "char", "const", "continue", "default", "do",
        "double", "else", "enum", "extern", "float", "for", "goto", "if",
        "inline", "int", "long", "register", "restrict", "return", "short",
        "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
        "unsigned", "void", "volatile", "while", "_Alignas", "_Alignof",
        "_Atomic", "_Bool", "_Complex", "_Generic", "_Imaginary", "_Noreturn",
        "_Static_assert", "_Thread_local", "__inline", "__inline__",
        "__volatile__", "__asm__", "asm",
    }
)

TYPE_KEYWORDS = frozenset(
    {
        "void", "char", "short", "int", "long", "float", "double", "signed",
        "unsigned", "_Bool", "_Complex", "struct", "union", "enum",
    }
)
QUALIFIERS = frozenset({"const", "volatile", "__volatile__", "restrict", "_Atomic"})
STORAGE = frozenset({"static", "extern", "register", "auto", "typedef", "_Thread_local"})
FUNCTION_SPECIFIERS = frozenset({"inline", "__inline", "__inline__", "_Noreturn"})
DECL_KEYWORDS = TYPE_KEYWORDS | QUALIFIERS | STORAGE | FUNCTION_SPECIFIERS
POINTER_TOKENS = frozenset({"*"}) | QUALIFIERS
TAG_KEYWORDS = frozenset({"struct", "union", "enum"})
LOOP_KEYWORDS = frozenset({"for", "while", "do"})
ATTRIBUTE_WORDS = frozenset({"__attribute__", "__attribute", "__declspec"})

ASSIGNMENT_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="})
INCDEC_OPS = frozenset({"++", "--"})

SOURCE_SUFFIXES = (".c", ".h")


# =======================================================================
# TOKENS
# =======================================================================


@dataclass(frozen=True)
class Token:
    """
    One lexical token. `prefix` holds the whitespace and line continuations
    that precede the token in the original text.
    """

    kind: str
    text: str
    line: int
    column: int
    prefix: str = ""


@dataclass(frozen=True)
class LexError:
    line: int
    column: int
    message: str


class TokenList(list):
    """
    A list of Token that also remembers the whitespace after the last token
    and the lexer errors met on the way.
    """

    def __init__(self, tokens: Iterable[Token] = (), trailing: str = "", errors: Iterable[LexError] = ()):
        super().__init__(tokens)
        self.trailing = trailing
        self.errors = list(errors)


class _CLexer:
    """
    ply rule set. Rules are tried in definition order; the BAD_* rules catch
    unterminated literals and comments and stop at the end of the line so
    lexing resumes on the next one.
    """

    tokens = (
        "WS",
        "LINE_COMMENT",
        "BLOCK_COMMENT",
        "BAD_COMMENT",
        "DIRECTIVE",
        "STRING",
        "BAD_STRING",
        "CHAR",
        "BAD_CHAR",
        "NUMBER",
        "ID",
        "PUNCT",
        "OTHER",
    )

    @TOKEN(r"(?:[ \t\r\f\v\n]|\\\r?\n)+")
    def t_WS(self, t):
        return t

    @TOKEN(r"//(?:[^\n\\]|\\\r?\n|\\)*")
    def t_LINE_COMMENT(self, t):
        return t

    @TOKEN(r"/\*(?:[^*]|\*+[^*/])*\*+/")
    def t_BLOCK_COMMENT(self, t):
        return t

    @TOKEN(r"/\*[^\n]*")
    def t_BAD_COMMENT(self, t):
        return t

    @TOKEN(r"\#(?:[^\n\\]|\\\r?\n|\\)*")
    def t_DIRECTIVE(self, t):
        data = t.lexer.lexdata
        line_start = data.rfind("\n", 0, t.lexpos) + 1
        if data[line_start:t.lexpos].strip():
            # '#' or '##' inside a line is an operator, not a directive
            t.value = "##" if data.startswith("##", t.lexpos) else "#"
            t.type = "PUNCT"
            t.lexer.lexpos = t.lexpos + len(t.value)
        return t

    @TOKEN(r'(?:u8|[uUL])?"(?:[^"\\\n]|\\(?:.|\r?\n))*"')
    def t_STRING(self, t):
        return t

    @TOKEN(r'(?:u8|[uUL])?"(?:[^"\\\n]|\\(?:.|\r?\n))*')
    def t_BAD_STRING(self, t):
        return t

    @TOKEN(r"[uUL]?'(?:[^'\\\n]|\\(?:.|\r?\n))*'")
    def t_CHAR(self, t):
        return t

    @TOKEN(r"[uUL]?'(?:[^'\\\n]|\\(?:.|\r?\n))*")
    def t_BAD_CHAR(self, t):
        return t

    @TOKEN(r"\.?[0-9](?:[eEpP][+-]|[0-9A-Za-z_.])*")
    def t_NUMBER(self, t):
        return t

    @TOKEN(r"[A-Za-z_$][A-Za-z0-9_$]*")
    def t_ID(self, t):
        return t

    @TOKEN(
        r"\.\.\.|<<=|>>=|->|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\||\*=|/=|%=|\+=|-=|&=|\^=|\|=|\#\#"
        r"|[\[\](){}.&*+\-~!/%<>^|?:;=,\#]"
    )
    def t_PUNCT(self, t):
        return t

    @TOKEN(r".")
    def t_OTHER(self, t):
        return t

    def t_error(self, t):
        t.value = t.value[0]
        t.type = "OTHER"
        t.lexer.skip(1)
        return t


_MASTER_LEXER = lex.lex(module=_CLexer(), reflags=0, errorlog=lex.NullLogger())

_KIND_BY_TYPE = {
    "LINE_COMMENT": COMMENT,
    "BLOCK_COMMENT": COMMENT,
    "BAD_COMMENT": COMMENT,
    "DIRECTIVE": DIRECTIVE,
    "STRING": LITERAL,
    "BAD_STRING": LITERAL,
    "CHAR": LITERAL,
    "BAD_CHAR": LITERAL,
    "NUMBER": LITERAL,
    "PUNCT": PUNCTUATOR,
    "OTHER": PUNCTUATOR,
}

_LEX_ERROR_MESSAGES = {
    "BAD_COMMENT": "unterminated comment",
    "BAD_STRING": "unterminated string literal",
    "BAD_CHAR": "unterminated character constant",
}


def decode_source(data: bytes) -> str | None:
    """
    Decodes a C file as UTF-8, falling back to Windows-1252. Returns None when
    neither works; callers skip such files with a warning.
    """
    for encoding in ("utf-8", "cp1252"):
        try:
            return data.decode(encoding)
        except UnicodeDecodeError:
            continue
    return None


def _advance(line: int, column: int, text: str) -> tuple[int, int]:
    newlines = text.count("\n")
    if newlines:
        return line + newlines, len(text) - text.rfind("\n")
    return line, column + len(text)


def tokenize(text: str | bytes) -> TokenList:
    """
    Splits C source into tokens without losing a byte.

    Args:
        text (str | bytes): Source text. Bytes are decoded with decode_source().

    Returns:
        TokenList: The tokens, with `.trailing` whitespace and `.errors`.
    """
    if isinstance(text, bytes):
        decoded = decode_source(text)
        if decoded is None:
            raise UnicodeDecodeError("utf-8", text, 0, len(text), "undecodable C source")
        text = decoded

    lexer = _MASTER_LEXER.clone()
    lexer.input(text)

    tokens: list[Token] = []
    errors: list[LexError] = []
    prefix: list[str] = []
    line, column = 1, 1

    for raw in iter(lexer.token, None):
        if raw.type == "WS":
            prefix.append(raw.value)
            line, column = _advance(line, column, raw.value)
            continue
        if raw.type == "ID":
            kind = KEYWORD if raw.value in KEYWORDS else IDENTIFIER
        else:
            kind = _KIND_BY_TYPE[raw.type]
        if raw.type in _LEX_ERROR_MESSAGES:
            errors.append(LexError(line, column, _LEX_ERROR_MESSAGES[raw.type]))
        tokens.append(Token(kind, raw.value, line, column, "".join(prefix)))
        prefix = []
        line, column = _advance(line, column, raw.value)

    return TokenList(tokens, "".join(prefix), errors)


def reconstruct(tokens: TokenList) -> str:
    """Rebuilds the original text from a token stream."""
    body = "".join(token.prefix + token.text for token in tokens)
    return body + getattr(tokens, "trailing", "")


# =======================================================================
# STRUCTURAL MODEL
# =======================================================================


@dataclass(frozen=True)
class VarModel:
    name: str
    line: int
    scope: str  # file | param | local
    is_volatile: bool = False
    is_static: bool = False
    is_extern: bool = False
    is_const: bool = False
    initialized_at_decl: bool = False


@dataclass(frozen=True)
class CallSite:
    name: str
    line: int
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class LoopSite:
    kind: str  # for | while | do
    line: int


@dataclass(frozen=True)
class Access:
    name: str
    line: int


@dataclass
class FunctionModel:
    name: str
    line: int
    is_definition: bool
    params: list[VarModel] = field(default_factory=list)
    locals: list[VarModel] = field(default_factory=list)
    calls: list[CallSite] = field(default_factory=list)
    loops: list[LoopSite] = field(default_factory=list)
    writes: list[Access] = field(default_factory=list)
    reads: list[Access] = field(default_factory=list)
    body_start: int = 0
    body_end: int = 0
    is_static: bool = False
    is_inline: bool = False

    @property
    def local_names(self) -> set[str]:
        return {var.name for var in self.params} | {var.name for var in self.locals}

    def accesses(self) -> list[Access]:
        return sorted(self.reads + self.writes, key=lambda a: (a.line, a.name))

    def touches_global(self, name: str) -> bool:
        """True when the body reads or writes `name` and no local shadows it."""
        if name in self.local_names:
            return False
        return any(access.name == name for access in self.reads + self.writes)


@dataclass(frozen=True)
class IncludeGuard:
    has_ifndef_define_pair: bool = False
    has_pragma_once: bool = False
    macro: str = ""


@dataclass(frozen=True)
class Directive:
    line: int
    name: str
    argument: str


@dataclass
class SourceModel:
    path: str
    includes: list[str] = field(default_factory=list)
    guard: IncludeGuard = field(default_factory=IncludeGuard)
    functions: list[FunctionModel] = field(default_factory=list)
    global_vars: list[VarModel] = field(default_factory=list)
    directives: list[Directive] = field(default_factory=list)
    tokens: TokenList = field(default_factory=TokenList)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def is_header(self) -> bool:
        return self.path.lower().endswith(".h")

    def definitions(self) -> list[FunctionModel]:
        return [fn for fn in self.functions if fn.is_definition]

    def function_at(self, line: int) -> FunctionModel | None:
        for fn in self.definitions():
            if fn.body_start <= line <= fn.body_end:
                return fn
        return None


# =======================================================================
# PARSER
# =======================================================================


class _Unbalanced(Exception):
    pass


def _split_top_level(items: list[Token], separator: str) -> list[list[Token]]:
    parts: list[list[Token]] = [[]]
    depth = 0
    for token in items:
        if token.text in ("(", "[", "{"):
            depth += 1
        elif token.text in (")", "]", "}"):
            depth = max(0, depth - 1)
        if token.text == separator and depth == 0:
            parts.append([])
            continue
        parts[-1].append(token)
    return [part for part in parts if part]


def _matching(items: list[Token], start: int, opener: str, closer: str) -> int | None:
    depth = 0
    for index in range(start, len(items)):
        text = items[index].text
        if text == opener:
            depth += 1
        elif text == closer:
            depth -= 1
            if depth == 0:
                return index
    return None


def _strip_attributes(items: list[Token]) -> list[Token]:
    """Drops `__attribute__((...))` style annotations from a declaration."""
    result: list[Token] = []
    index = 0
    while index < len(items):
        token = items[index]
        if token.text in ATTRIBUTE_WORDS and index + 1 < len(items) and items[index + 1].text == "(":
            close = _matching(items, index + 1, "(", ")")
            index = len(items) if close is None else close + 1
            continue
        result.append(token)
        index += 1
    return result


def _is_name(token: Token) -> bool:
    return token.kind == IDENTIFIER


def _tag_positions(items: list[Token]) -> set[int]:
    """Positions of struct/union/enum tag names, which are never declarators."""
    return {
        index + 1
        for index, token in enumerate(items[:-1])
        if token.text in TAG_KEYWORDS and _is_name(items[index + 1])
    }


@dataclass
class _Declarator:
    name_pos: int
    start: int
    is_function: bool = False
    params: tuple[int, int] | None = None  # positions of '(' and ')'


def _find_declarator(part: list[Token], need_type: bool) -> _Declarator | None:
    """
    Locates the declared name inside one comma-separated declarator.

    `need_type` requires at least one type token before the name, which is
    how a first declarator (`int x`) differs from a bare expression (`x`).
    """
    tags = _tag_positions(part)
    limit = len(part)
    depth = 0
    for index, token in enumerate(part):
        if token.text in ("(", "["):
            depth += 1
        elif token.text in (")", "]"):
            depth -= 1
        elif token.text == "=" and depth == 0:
            limit = index
            break
    head = part[:limit]

    # Parenthesised declarator: (*name)(...) or (*name[4])
    for index, token in enumerate(head):
        if token.text == "(" and index + 1 < len(head) and head[index + 1].text in ("*", "^"):
            close = _matching(head, index, "(", ")")
            inner_end = close if close is not None else len(head)
            for inner in range(index + 1, inner_end):
                if _is_name(head[inner]):
                    return _Declarator(inner, index)
            return None

    # Function declarator: name(...)
    for index, token in enumerate(head):
        if token.text == "(" and index > 0 and _is_name(head[index - 1]) and (index - 1) not in tags:
            close = _matching(head, index, "(", ")")
            if close is None:
                return None
            name_pos = index - 1
            if need_type and not _has_type_before(head, name_pos, tags):
                return None
            return _Declarator(name_pos, _declarator_start(head, name_pos), True, (index, close))

    # Plain declarator: the last identifier before '[' or the end.
    stop = len(head)
    for index, token in enumerate(head):
        if token.text == "[":
            stop = index
            break
    candidates = [i for i in range(stop) if _is_name(head[i]) and i not in tags]
    if not candidates:
        return None
    name_pos = candidates[-1]
    if need_type and not _has_type_before(head, name_pos, tags):
        return None
    return _Declarator(name_pos, _declarator_start(head, name_pos))


def _has_type_before(head: list[Token], name_pos: int, tags: set[int]) -> bool:
    for index in range(name_pos):
        token = head[index]
        if token.text in DECL_KEYWORDS or token.text == "{}" or index in tags:
            return True
        if _is_name(token):
            return True
    return False


def _declarator_start(head: list[Token], name_pos: int) -> int:
    start = name_pos
    while start > 0 and head[start - 1].text in POINTER_TOKENS:
        start -= 1
    # qualifiers directly before the name belong to the pointer only when a '*' precedes them
    while start < name_pos and head[start].text != "*":
        start += 1
    return start


@dataclass
class _DeclarationInfo:
    variables: list[VarModel] = field(default_factory=list)
    functions: list[FunctionModel] = field(default_factory=list)
    skip: set[int] = field(default_factory=set)  # positions that are not expressions


def _analyze_declaration(items: list[Token], scope: str) -> _DeclarationInfo:
    """
    Turns one declaration (without its ';') into variables and prototypes.
    Positions of type tokens and declared names are reported in `skip` so
    the expression scanner does not count them as reads.
    """
    info = _DeclarationInfo()
    if not items or any(token.text == "typedef" for token in items):
        info.skip.update(range(len(items)))
        return info

    specifiers: set[str] = set()
    offset = 0
    for part_index, part in enumerate(_split_top_level(items, ",")):
        # recover the offset of this part within `items`
        while offset < len(items) and items[offset] is not part[0]:
            offset += 1
        declarator = _find_declarator(part, need_type=part_index == 0)
        if declarator is None:
            if part_index == 0:
                return _DeclarationInfo()
            offset += len(part)
            continue
        if part_index == 0:
            specifiers = {token.text for token in part[: declarator.start]}
            info.skip.update(offset + i for i in range(declarator.start))
        info.skip.add(offset + declarator.name_pos)

        name_token = part[declarator.name_pos]
        before_eq = []
        for token in part:
            if token.text == "=":
                break
            before_eq.append(token.text)
        declarator_texts = [token.text for token in part[declarator.start: declarator.name_pos]]

        if declarator.is_function:
            open_pos, close_pos = declarator.params
            info.skip.update(offset + i for i in range(declarator.name_pos, close_pos + 1))
            info.functions.append(
                FunctionModel(
                    name=name_token.text,
                    line=name_token.line,
                    is_definition=False,
                    params=_parse_params(part[open_pos + 1: close_pos]),
                    is_static="static" in specifiers,
                    is_inline=bool(specifiers & FUNCTION_SPECIFIERS),
                )
            )
        else:
            has_pointer = "*" in declarator_texts or any(t.text == "(" for t in part[: declarator.name_pos])
            after_star = declarator_texts[len(declarator_texts) - declarator_texts[::-1].index("*"):] if "*" in declarator_texts else []
            is_const = ("const" in specifiers and not has_pointer) or "const" in after_star
            info.variables.append(
                VarModel(
                    name=name_token.text,
                    line=name_token.line,
                    scope=scope,
                    is_volatile=bool(({"volatile", "__volatile__"} & specifiers) or ({"volatile", "__volatile__"} & set(before_eq))),
                    is_static="static" in specifiers,
                    is_extern="extern" in specifiers,
                    is_const=is_const,
                    initialized_at_decl="=" in [token.text for token in part],
                )
            )
        offset += len(part)
    return info


def _parse_params(tokens: list[Token]) -> list[VarModel]:
    params = []
    for part in _split_top_level(tokens, ","):
        texts = [token.text for token in part]
        if texts in (["void"], ["..."]):
            continue
        info = _analyze_declaration(part, "param")
        params.extend(info.variables)
    return params


def _call_arguments(body: list[Token], open_index: int, close_index: int) -> tuple[str, ...]:
    """Bare identifier arguments (`cb` or `&cb`) of a call."""
    names = []
    for part in _split_top_level(body[open_index + 1: close_index], ","):
        texts = [token for token in part if token.text != "&"]
        if len(texts) == 1 and _is_name(texts[0]) and len(part) <= 2:
            names.append(texts[0].text)
    return tuple(names)


class _Parser:
    """Best-effort recursive scanner over the significant tokens of one file."""

    def __init__(self, tokens: TokenList, path: str):
        self.path = path
        self.tokens = [t for t in tokens if t.kind not in (COMMENT, DIRECTIVE)]
        self.functions: dict[tuple[str, int], FunctionModel] = {}
        self.globals: dict[tuple[str, int], VarModel] = {}
        self.problems: list[Diagnostic] = []
        self.linkage_depth = 0  # open `extern "C" {` blocks

    def problem(self, line: int, message: str) -> None:
        self.problems.append(
            Diagnostic(self.path, line, PARSE_ERROR, message=message, severity="error")
        )

    # -----------------------------------------------------------------------
    def parse(self) -> None:
        position = 0
        while position < len(self.tokens):
            try:
                next_position = self.top_level_item(position)
            except Exception as exc:  # the parser must never abort a sweep
                logger.debug("Parser gave up on %s at token %d: %s", self.path, position, exc)
                self.problem(self.tokens[position].line, "unparseable construct")
                next_position = self.skip_to_next_item(position)
            position = max(next_position, position + 1)

    def skip_to_next_item(self, position: int) -> int:
        for index in range(position, len(self.tokens)):
            if self.tokens[index].text in (";", "}"):
                return index + 1
        return len(self.tokens)

    # -----------------------------------------------------------------------
    def top_level_item(self, position: int) -> int:
        items: list[Token] = []
        depth = 0
        index = position
        tokens = self.tokens
        while index < len(tokens):
            token = tokens[index]
            text = token.text
            if text == ";" and depth == 0:
                self.declaration(items)
                return index + 1
            if text in ("(", "["):
                depth += 1
            elif text in (")", "]"):
                depth = max(0, depth - 1)
            elif text == "{":
                if depth == 0 and [t.text for t in items] == ["extern", "\"C\""]:
                    self.linkage_depth += 1
                    return index + 1
                if depth == 0 and self.is_function_header(items):
                    return self.function_definition(items, index)
                close = _matching(tokens, index, "{", "}")
                if close is None:
                    self.problem(token.line, "unbalanced braces")
                    return len(tokens)
                items.append(Token(PUNCTUATOR, "{}", token.line, token.column))
                index = close + 1
                continue
            elif text == "}":
                if self.linkage_depth and not items:
                    self.linkage_depth -= 1
                else:
                    self.problem(token.line, "unbalanced braces")
                return index + 1
            items.append(token)
            index += 1
        if items:
            self.declaration(items)
        return len(tokens)

    @staticmethod
    def is_function_header(items: list[Token]) -> bool:
        items = _strip_attributes(items)
        if len(items) < 3 or items[-1].text != ")":
            return False
        if any(token.text == "=" for token in items):
            return False
        depth = 0
        for index in range(len(items) - 1, -1, -1):
            text = items[index].text
            if text == ")":
                depth += 1
            elif text == "(":
                depth -= 1
                if depth == 0:
                    return index > 0 and _is_name(items[index - 1])
        return False

    def declaration(self, items: list[Token]) -> None:
        info = _analyze_declaration(_strip_attributes(items), "file")
        for var in info.variables:
            self.globals.setdefault((var.name, var.line), var)
        for fn in info.functions:
            self.functions.setdefault((fn.name, fn.line), fn)

    # -----------------------------------------------------------------------
    def function_definition(self, items: list[Token], brace_index: int) -> int:
        items = _strip_attributes(items)
        open_pos = _matching_reverse(items, len(items) - 1)
        name_token = items[open_pos - 1]
        specifiers = {token.text for token in items[: open_pos - 1]}

        close = _matching(self.tokens, brace_index, "{", "}")
        if close is None:
            self.problem(self.tokens[brace_index].line, "unbalanced braces")
            body_end_index = len(self.tokens)
            body_end_line = self.tokens[-1].line
        else:
            body_end_index = close
            body_end_line = self.tokens[close].line

        fn = FunctionModel(
            name=name_token.text,
            line=name_token.line,
            is_definition=True,
            params=_parse_params(items[open_pos + 1: -1]),
            body_start=self.tokens[brace_index].line,
            body_end=body_end_line,
            is_static="static" in specifiers,
            is_inline=bool(specifiers & FUNCTION_SPECIFIERS),
        )
        _BodyScanner(fn, self.tokens[brace_index + 1: body_end_index]).scan()
        self.functions.setdefault((fn.name, fn.line), fn)
        return body_end_index + 1


def _matching_reverse(items: list[Token], close_index: int) -> int:
    depth = 0
    for index in range(close_index, -1, -1):
        text = items[index].text
        if text == ")":
            depth += 1
        elif text == "(":
            depth -= 1
            if depth == 0:
                return index
    raise _Unbalanced("no opening parenthesis")


class _BodyScanner:
    """
    Fills a FunctionModel from its body tokens: local declarations first,
    then calls, loops, reads and writes.
    """

    def __init__(self, fn: FunctionModel, body: list[Token]):
        self.fn = fn
        self.body = body
        self.skip: set[int] = set()

    def scan(self) -> None:
        self.collect_declarations()
        self.collect_expressions()

    # -----------------------------------------------------------------------
    def starts_declaration(self, index: int) -> bool:
        body = self.body
        token = body[index]
        if token.text in DECL_KEYWORDS:
            return True
        if not _is_name(token) or index + 1 >= len(body):
            return False
        following = body[index + 1]
        if _is_name(following):
            return True
        if following.text == "*":
            probe = index + 1
            while probe < len(body) and body[probe].text in POINTER_TOKENS:
                probe += 1
            return (
                probe + 1 < len(body)
                and _is_name(body[probe])
                and body[probe + 1].text in (";", "=", ",", "[")
            )
        return False

    def declaration_end(self, index: int, stop_at_paren: bool = False) -> int:
        depth = 0
        for probe in range(index, len(self.body)):
            text = self.body[probe].text
            if text in ("(", "[", "{"):
                depth += 1
            elif text in (")", "]", "}"):
                if depth == 0 and stop_at_paren:
                    return probe
                depth -= 1
            elif text == ";" and depth == 0:
                return probe
        return len(self.body)

    def record_declaration(self, start: int, end: int) -> None:
        info = _analyze_declaration(self.body[start:end], "local")
        self.fn.locals.extend(info.variables)
        self.skip.update(start + position for position in info.skip)

    def collect_declarations(self) -> None:
        body = self.body
        statement_start = True
        index = 0
        while index < len(body):
            text = body[index].text
            if statement_start and self.starts_declaration(index):
                end = self.declaration_end(index)
                self.record_declaration(index, end)
                index = end + 1
                statement_start = True
                continue
            if text == "for" and index + 1 < len(body) and body[index + 1].text == "(":
                init = index + 2
                if init < len(body) and self.starts_declaration(init):
                    end = self.declaration_end(init, stop_at_paren=True)
                    self.record_declaration(init, end)
                    index = end
                    statement_start = False
                    continue
            # placeholder ellipses in example code separate statements too
            statement_start = text in (";", "{", "}", "...")
            index += 1

    # -----------------------------------------------------------------------
    def collect_expressions(self) -> None:
        body = self.body
        do_closers: set[int] = set()
        for index, token in enumerate(body):
            text = token.text
            if token.kind == KEYWORD and text in LOOP_KEYWORDS:
                if text == "while" and index > 0 and (index - 1) in do_closers:
                    continue
                self.fn.loops.append(LoopSite(text, token.line))
                if text == "do" and index + 1 < len(body) and body[index + 1].text == "{":
                    close = _matching(body, index + 1, "{", "}")
                    if close is not None:
                        do_closers.add(close)
                continue
            if token.kind != IDENTIFIER or index in self.skip:
                continue
            if index > 0 and body[index - 1].text in (".", "->"):
                continue
            if index + 1 < len(body) and body[index + 1].text == "(":
                close = _matching(body, index + 1, "(", ")")
                args = _call_arguments(body, index + 1, close) if close is not None else ()
                self.fn.calls.append(CallSite(text, token.line, args))
                continue
            access = Access(text, token.line)
            if self.is_write(index):
                self.fn.writes.append(access)
            else:
                self.fn.reads.append(access)

    def is_write(self, index: int) -> bool:
        body = self.body
        if index > 0 and body[index - 1].text in INCDEC_OPS:
            return True
        probe = index + 1
        while probe < len(body):
            text = body[probe].text
            if text == "[":
                close = _matching(body, probe, "[", "]")
                if close is None:
                    return False
                probe = close + 1
            elif text in (".", "->") and probe + 1 < len(body):
                probe += 2
            else:
                break
        if probe >= len(body):
            return False
        return body[probe].text in ASSIGNMENT_OPS or body[probe].text in INCDEC_OPS


# -----------------------------------------------------------------------
_DIRECTIVE_RE = re.compile(r"^\#\s*(\w*)\s*(.*)$", re.DOTALL)
_COMMENT_RE = re.compile(r"/\*.*?\*/|//.*$", re.DOTALL | re.MULTILINE)


def _directive(token: Token) -> Directive:
    text = re.sub(r"\\\r?\n", " ", token.text)
    text = _COMMENT_RE.sub(" ", text).strip()
    match = _DIRECTIVE_RE.match(text)
    if not match:
        return Directive(token.line, "", "")
    return Directive(token.line, match.group(1), match.group(2).strip())


_IFNDEF_FORMS = (
    re.compile(r"^!\s*defined\s*\(\s*(\w+)\s*\)$"),
    re.compile(r"^!\s*defined\s+(\w+)$"),
)


def _guard_macro(directive: Directive) -> str | None:
    if directive.name == "ifndef":
        return directive.argument.split()[0] if directive.argument else None
    if directive.name == "if":
        for form in _IFNDEF_FORMS:
            match = form.match(directive.argument)
            if match:
                return match.group(1)
    return None


def _include_guard(tokens: TokenList, directives: list[Directive]) -> IncludeGuard:
    has_pragma_once = any(
        d.name == "pragma" and d.argument.split()[:1] == ["once"] for d in directives
    )
    significant = [t for t in tokens if t.kind != COMMENT]
    if len(significant) < 3 or significant[0].kind != DIRECTIVE or significant[1].kind != DIRECTIVE:
        return IncludeGuard(False, has_pragma_once)

    opening, define = _directive(significant[0]), _directive(significant[1])
    macro = _guard_macro(opening)
    if not macro or define.name != "define" or define.argument.split()[:1] != [macro]:
        return IncludeGuard(False, has_pragma_once)

    # the #endif matching the opening conditional must be the last significant token
    depth = 0
    for index, token in enumerate(significant):
        if token.kind != DIRECTIVE:
            continue
        name = _directive(token).name
        if name in ("if", "ifdef", "ifndef"):
            depth += 1
        elif name == "endif":
            depth -= 1
            if depth == 0:
                closed_at_end = index == len(significant) - 1
                return IncludeGuard(closed_at_end, has_pragma_once, macro if closed_at_end else "")
    return IncludeGuard(False, has_pragma_once)


def _include_name(argument: str) -> str | None:
    match = re.match(r'^[<"]([^>"]+)[>"]', argument)
    return match.group(1) if match else None


def parse_translation_unit(tokens: TokenList, path: str) -> SourceModel:
    """
    Builds the structural model of one C file.

    Never raises: unbalanced braces and unreadable regions become parseError
    diagnostics on the returned model, next to any lexer errors carried by
    the token stream.

    Args:
        tokens (TokenList): Output of tokenize().
        path (str): Repository-relative path, used in diagnostics.

    Returns:
        SourceModel: The (possibly partial) model.
    """
    if not isinstance(tokens, TokenList):
        tokens = TokenList(tokens)

    directives = [_directive(t) for t in tokens if t.kind == DIRECTIVE]
    parser = _Parser(tokens, path)
    parser.parse()

    lex_problems = [
        Diagnostic(path, error.line, LEX_ERROR, message=error.message, severity="error")
        for error in tokens.errors
    ]

    functions = sorted(parser.functions.values(), key=lambda fn: (fn.line, fn.name))
    global_vars = sorted(parser.globals.values(), key=lambda var: (var.line, var.name))
    includes = [
        name
        for name in (_include_name(d.argument) for d in directives if d.name == "include")
        if name
    ]

    return SourceModel(
        path=path,
        includes=includes,
        guard=_include_guard(tokens, directives),
        functions=functions,
        global_vars=global_vars,
        directives=directives,
        tokens=tokens,
        diagnostics=sorted(lex_problems + parser.problems),
    )


def parse_source(text: str | bytes, path: str) -> SourceModel:
    """tokenize() followed by parse_translation_unit()."""
    return parse_translation_unit(tokenize(text), path)


# =======================================================================
# INTERRUPT SERVICE ROUTINES
# =======================================================================


@dataclass(frozen=True)
class IsrConfig:
    patterns: tuple[str, ...] = ("*_Handler", "*_IRQHandler", "*_callback")
    registration_calls: tuple[str, ...] = (
        "pio_handler_set",
        "gpio_set_irq_enabled_with_callback",
        "gpio_add_raw_irq_handler",
        "irq_set_exclusive_handler",
        "add_repeating_timer_ms",
        "attachInterrupt",
        "NVIC_SetVector",
    )


def registration_targets(models: Iterable[SourceModel], cfg: IsrConfig) -> set[str]:
    """Names passed to a configured registration call anywhere in `models`."""
    registration = set(cfg.registration_calls)
    names: set[str] = set()
    for model in models:
        for fn in model.functions:
            for call in fn.calls:
                if call.name in registration:
                    names.update(call.args)
    return names


def classify_isr(model: SourceModel, cfg: IsrConfig, registered: Iterable[str] = ()) -> set[str]:
    """
    Returns the names of the functions in `model` that are interrupt service
    routines: their name matches a configured pattern, or they are handed to
    a configured registration call (in this file or, through `registered`,
    anywhere else in the tree).
    """
    names = {fn.name for fn in model.functions}
    isrs = {name for name in names if any(fnmatchcase(name, pattern) for pattern in cfg.patterns)}
    isrs |= names & (registration_targets([model], cfg) | set(registered))
    return isrs
