"""Semantic grammars, typed ASTs and the functional program notation.

A grammar declares a set of tags (predicates and entities), a set of types,
a typing function and a valency function giving, for each tag and type, the
number of arguments of that type the tag requires.  Programs are written in
functional notation, e.g. ``exclude(river_all,traverse_2(stateid))``, and are
represented internally as ASTs: rooted arborescences whose vertices carry
tags and whose arcs denote arguments.
"""

from dataclasses import dataclass, field

RESERVED_NAMES = ("ROOT", "NULL")


class GrammarError(ValueError):
    """Raised for malformed grammar files or unknown tags/types."""


class ProgramParseError(ValueError):
    """Raised for malformed functional-notation programs."""


@dataclass(frozen=True)
class Grammar:
    """A semantic grammar: tags, types, typing and valency functions.

    ``tags`` and ``types`` keep file order so that indices are deterministic.
    ``tag_args`` stores only nonzero counts; use :meth:`args` for lookups.
    """

    tags: tuple[str, ...]
    types: tuple[str, ...]
    tag_type: dict[str, str] = field(hash=False)
    tag_args: dict[tuple[str, str], int] = field(hash=False)

    def __post_init__(self):
        for name in self.tags:
            if name in RESERVED_NAMES:
                raise GrammarError(f"reserved name used as tag: {name!r}")

    def tag_index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise GrammarError(f"unknown tag: {tag!r}") from None

    def type_index(self, type_name: str) -> int:
        try:
            return self.types.index(type_name)
        except ValueError:
            raise GrammarError(f"unknown type: {type_name!r}") from None

    def type_of(self, tag: str) -> str:
        if tag not in self.tag_type:
            raise GrammarError(f"unknown tag: {tag!r}")
        return self.tag_type[tag]

    def args(self, tag: str, type_name: str) -> int:
        """Number of arguments of ``type_name`` required by ``tag`` (0 if unlisted)."""
        if tag not in self.tag_type:
            raise GrammarError(f"unknown tag: {tag!r}")
        if type_name not in self.types:
            raise GrammarError(f"unknown type: {type_name!r}")
        return self.tag_args.get((tag, type_name), 0)

    def arity(self, tag: str) -> int:
        return sum(self.args(tag, t) for t in self.types)

    def tags_of_type(self, type_name: str) -> tuple[str, ...]:
        return tuple(e for e in self.tags if self.tag_type[e] == type_name)

    def __hash__(self):
        return hash((self.tags, self.types, tuple(sorted(self.tag_args.items()))))


def is_entity(grammar: Grammar, tag: str) -> bool:
    """True iff ``tag`` takes no argument of any type."""
    if tag not in grammar.tag_type:
        raise GrammarError(f"unknown tag: {tag!r}")
    return all(grammar.args(tag, t) == 0 for t in grammar.types)


def parse_grammar(text: str) -> Grammar:
    """Parse a grammar file.

    One declaration per line: ``type <name>`` or
    ``tag <name> <type> [<argtype>=<count> ...]``.  Blank lines and ``#``
    comments are ignored.  Tag/type order is file order.
    """
    tags: list[str] = []
    types: list[str] = []
    tag_type: dict[str, str] = {}
    tag_args: dict[tuple[str, str], int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "type":
            if len(fields) != 2:
                raise GrammarError(f"line {lineno}: expected 'type <name>'")
            name = fields[1]
            if name in RESERVED_NAMES:
                raise GrammarError(f"line {lineno}: reserved name used as type: {name!r}")
            if name in types:
                raise GrammarError(f"line {lineno}: duplicate type: {name!r}")
            types.append(name)
        elif kind == "tag":
            if len(fields) < 3:
                raise GrammarError(f"line {lineno}: expected 'tag <name> <type> [...]'")
            name, type_name = fields[1], fields[2]
            if name in RESERVED_NAMES:
                raise GrammarError(f"line {lineno}: reserved name used as tag: {name!r}")
            if name in tag_type:
                raise GrammarError(f"line {lineno}: duplicate tag: {name!r}")
            if type_name not in types:
                raise GrammarError(f"line {lineno}: unknown type in tag declaration: {type_name!r}")
            for spec in fields[3:]:
                if "=" not in spec:
                    raise GrammarError(f"line {lineno}: expected '<argtype>=<count>', got {spec!r}")
                arg_type, _, count_text = spec.partition("=")
                if arg_type not in types:
                    raise GrammarError(f"line {lineno}: unknown type in tag declaration: {arg_type!r}")
                try:
                    count = int(count_text)
                except ValueError:
                    raise GrammarError(f"line {lineno}: bad argument count: {count_text!r}") from None
                if count < 0:
                    raise GrammarError(f"line {lineno}: negative argument count: {count}")
                if count:
                    tag_args[(name, arg_type)] = count
            tags.append(name)
            tag_type[name] = type_name
        else:
            raise GrammarError(f"line {lineno}: unknown declaration kind: {kind!r}")

    return Grammar(tags=tuple(tags), types=tuple(types), tag_type=tag_type, tag_args=tag_args)


@dataclass(frozen=True)
class Ast:
    """A labeled arborescence of predicate/entity instances.

    Vertices are ``0..len(labels)-1`` in preorder of the source program; arcs
    are ``(parent, child)`` pairs in the order arguments were written.
    """

    labels: tuple[str, ...]
    arcs: tuple[tuple[int, int], ...]
    root: int = 0

    def __len__(self) -> int:
        return len(self.labels)

    def children(self, u: int) -> list[int]:
        return [v for p, v in self.arcs if p == u]

    def parent(self, u: int) -> int | None:
        for p, v in self.arcs:
            if v == u:
                return p
        return None

    def preorder(self) -> list[int]:
        out: list[int] = []
        stack = [self.root]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(reversed(self.children(u)))
        return out


_NAME_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.'-")


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "(),":
            tokens.append(c)
            i += 1
        elif c in _NAME_CHARS:
            j = i
            while j < len(text) and text[j] in _NAME_CHARS:
                j += 1
            tokens.append(text[i:j])
            i = j
        else:
            raise ProgramParseError(f"unexpected character {c!r} at position {i}")
    return tokens


def parse_program(text: str, grammar: Grammar) -> Ast:
    """Parse functional notation into an :class:`Ast` with preorder vertex ids.

    Arity and type correctness are not checked here; use :func:`validate_ast`.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ProgramParseError("empty program")
    labels: list[str] = []
    arcs: list[tuple[int, int]] = []
    pos = 0

    def parse_node() -> int:
        nonlocal pos
        if pos >= len(tokens):
            raise ProgramParseError("unexpected end of program")
        name = tokens[pos]
        if name in "(),":
            raise ProgramParseError(f"expected a tag name, got {name!r}")
        if name not in grammar.tag_type:
            raise ProgramParseError(f"unknown tag: {name!r}")
        pos += 1
        node = len(labels)
        labels.append(name)
        if pos < len(tokens) and tokens[pos] == "(":
            pos += 1
            while True:
                arcs.append((node, len(labels)))  # the child takes the next id
                parse_node()
                if pos >= len(tokens):
                    raise ProgramParseError("unbalanced parentheses")
                if tokens[pos] == ",":
                    pos += 1
                    continue
                if tokens[pos] == ")":
                    pos += 1
                    break
                raise ProgramParseError(f"expected ',' or ')', got {tokens[pos]!r}")
        return node

    root = parse_node()
    if pos != len(tokens):
        raise ProgramParseError(f"trailing input after program: {tokens[pos]!r}")
    return Ast(labels=tuple(labels), arcs=tuple(arcs), root=root)


def serialize_ast(ast: Ast) -> str:
    """Canonical functional notation; children printed in stored order."""

    def render(u: int) -> str:
        kids = ast.children(u)
        if not kids:
            return ast.labels[u]
        return ast.labels[u] + "(" + ",".join(render(v) for v in kids) + ")"

    return render(ast.root)


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_ast(grammar: Grammar, ast: Ast) -> ValidationReport:
    """Check arborescence shape and per-type valency of every vertex.

    Argument order is ignored: only the number of children of each type is
    compared against the grammar's valency function.
    """
    violations: list[str] = []
    n = len(ast)
    indeg = [0] * n
    for p, v in ast.arcs:
        if not (0 <= p < n and 0 <= v < n):
            violations.append(f"arc ({p},{v}) references a missing vertex")
            continue
        indeg[v] += 1
    for u in range(n):
        if u == ast.root:
            if indeg[u] != 0:
                violations.append(f"root vertex {u} has an incoming arc")
        elif indeg[u] > 1:
            violations.append(f"vertex {u} is reentrant ({indeg[u]} incoming arcs)")
    if len(ast.arcs) != n - 1:
        violations.append(f"{len(ast.arcs)} arcs for {n} vertices; an arborescence needs {n - 1}")
    reached = set()
    stack = [ast.root]
    while stack:
        u = stack.pop()
        if u in reached:
            violations.append(f"cycle through vertex {u}")
            break
        reached.add(u)
        stack.extend(ast.children(u))
    if len(reached) < n and not violations:
        violations.append("not all vertices are reachable from the root")

    for u in range(n):
        tag = ast.labels[u]
        if tag not in grammar.tag_type:
            violations.append(f"vertex {u}: unknown tag {tag!r}")
            continue
        counts = {t: 0 for t in grammar.types}
        for v in ast.children(u):
            child_tag = ast.labels[v]
            if child_tag not in grammar.tag_type:
                continue
            counts[grammar.type_of(child_tag)] += 1
        for t in grammar.types:
            want = grammar.args(tag, t)
            got = counts[t]
            if want != got:
                violations.append(
                    f"vertex {u} ({tag}): expected {want} argument(s) of type {t}, got {got}"
                )
    return ValidationReport(violations)


def canonical_program(grammar: Grammar, ast: Ast) -> str:
    """Serialization that is invariant to same-type argument reordering.

    Children of every vertex are sorted by (type index, canonical subtree),
    so two programs that differ only in argument order within a type map to
    the same string.  Used for exact-match comparison.
    """

    def render(u: int) -> str:
        kids = ast.children(u)
        if not kids:
            return ast.labels[u]
        rendered = sorted(
            (grammar.type_index(grammar.type_of(ast.labels[v])), render(v)) for v in kids
        )
        return ast.labels[u] + "(" + ",".join(r for _, r in rendered) + ")"

    return render(ast.root)


def programs_match(grammar: Grammar, a: Ast, b: Ast) -> bool:
    """Exact match up to same-type argument order."""
    return canonical_program(grammar, a) == canonical_program(grammar, b)
