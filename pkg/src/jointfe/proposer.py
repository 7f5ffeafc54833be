"""Feature-operation proposals: prompt assembly, reply parsing and backends.

A backend turns a :class:`ProposerContext` (dataset profile, ancestor
pipeline, optional memory, directive) into a :class:`Proposal`, one FE step
made of one or more DSL operation specs.
"""

from __future__ import annotations

import ast
import enum
import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .feops import PARAMS, OperationError, OperationSpec, validate_specs
from .tabular import CATEGORICAL, NUMERIC, DataTable, column_summary

TOP_K_FEATURES = 15
HIGH_MISSING = 0.3
MAX_ATTEMPTS = 3


class Directive(str, enum.Enum):
    INITIALIZATION = "Initialization"
    EXPLORATION = "Exploration"
    EXPLOITATION = "Exploitation"


class ProposerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Proposal:
    reasoning: str
    required_features: tuple[str, ...]
    way: str
    op_specs: tuple[OperationSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "required_features", tuple(self.required_features))
        object.__setattr__(self, "op_specs", tuple(self.op_specs))

    def to_dict(self) -> dict:
        return {"reasoning": self.reasoning, "required_features": list(self.required_features),
                "way": self.way, "op_specs": [s.to_dict() for s in self.op_specs]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Proposal":
        specs = tuple(OperationSpec.from_dict(s) for s in d["op_specs"])
        required = d.get("required_features")
        if required is None:
            required = _external_inputs(specs)
        way = d.get("way") or "; ".join(s.describe() for s in specs)
        return cls(d.get("reasoning", ""), tuple(required), way, specs)


@dataclass(frozen=True)
class AncestorStep:
    reason: str
    way: str
    score: float
    op_specs: tuple[OperationSpec, ...] = ()


@dataclass
class ProposerContext:
    dataset_info: str
    ancestors: list[AncestorStep]
    directive: Directive
    learner: str
    schema: dict[str, str]
    target: str
    memory: list = field(default_factory=list)  # MemoryEntry-like: reasoning, way, v, dv

    def __post_init__(self):
        if not self.ancestors or self.ancestors[0].reason != "do nothing":
            raise ValueError("ancestor pipeline must start with the 'do nothing' root entry")


def _external_inputs(specs: Sequence[OperationSpec]) -> list[str]:
    """Inputs not produced by an earlier spec of the same step, in first-use order."""
    produced: set[str] = set()
    prefixes: list[str] = []
    out: list[str] = []
    for s in specs:
        for c in s.inputs:
            if c not in produced and c not in out and not any(c.startswith(p) for p in prefixes):
                out.append(c)
        if s.kind == "one_hot":
            prefixes += [f"{c}_" for c in s.inputs]
        produced.update(s.outputs)
        if s.kind == "arithmetic" and not s.outputs and len(s.inputs) == 2:
            produced.add(f"{s.inputs[0]}_{s.param('op')}_{s.inputs[1]}")
        if s.kind == "cyclic_encode" and not s.outputs:
            produced.update(n for c in s.inputs for n in (f"{c}_sin", f"{c}_cos"))
    return out


# ---------------------------------------------------------------------------
# prompt assembly

SYSTEM_PROMPT = (
    "You are a senior feature-engineering specialist for tabular machine learning. "
    "You study column statistics and the transformations already applied, then design "
    "the next transformation step that should raise the downstream model's validation score."
)

_DIRECTIVE_TEXT = {
    Directive.INITIALIZATION: (
        "Initialization (root dataset). Suggest a dependable first step that helps across "
        "the board, such as cleaning, rescaling or encoding, rather than a narrow trick. "
        "It becomes the baseline that later steps build on."
    ),
    Directive.EXPLORATION: (
        "Exploration. Suggest something not yet tried on this branch: a different operation "
        "family or different columns. Bold, unusual ideas are welcome."
    ),
    Directive.EXPLOITATION: (
        "Exploitation. Build on the operations listed under memory: reuse one on new columns, "
        "adjust its parameters, or combine two of them. Prefer a small, targeted refinement."
    ),
}


def _dsl_reference() -> str:
    lines = []
    for kind, params in PARAMS.items():
        args = ", ".join(f"{p}{'' if d is ... else '=' + repr(d)}" for p, (_, d) in params.items())
        lines.append(f"  - {kind}({args})")
    return "\n".join(lines)


def _feature_priority(table: DataTable, notes: Mapping[str, str]) -> list[str]:
    scored = []
    for pos, name in enumerate(table.feature_names):
        col = table.column(name)
        miss = float(col.missing.mean()) if table.n_rows else 1.0
        score = 2.0 * bool(notes.get(name)) + (1.0 - miss) + (0.5 if col.kind == NUMERIC else 0.25)
        scored.append((-score, pos, name))
    return [name for _, _, name in sorted(scored)]


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.3f}"


def render_dataset_info(table: DataTable, notes: Mapping[str, str] | None = None,
                        description: str = "", top_k: int = TOP_K_FEATURES) -> str:
    """Render the dataset profile, quality summary and top-k key-feature lines."""
    notes = notes or {}
    feats = table.feature_names
    n_cat = sum(table.column(c).kind == CATEGORICAL for c in feats)
    lines = ["[Dataset Profile]",
             f"samples={table.n_rows}, features={len(feats)}, categorical={n_cat}, "
             f"numerical={len(feats) - n_cat}, task={table.task}"]
    target_note = notes.get(table.target, "")
    lines.append(f"Target={table.target}" + (f": {target_note}" if target_note else ""))
    if description:
        lines.append(f"Description: {description}")
    lines.append(f"All columns: {feats}")
    summaries = {c: column_summary(table, c) for c in feats}
    high = [c for c in feats if summaries[c].missing_ratio > HIGH_MISSING]
    lines += ["", "[Feature Summary]", f"high-missing(>{HIGH_MISSING}): {len(high)} / {len(feats)}"
              + (f" {high}" if high else "")]
    keys = _feature_priority(table, notes)[:top_k]
    lines += ["", f"[Key Features] (Top {len(keys)})"]
    for name in keys:
        s = summaries[name]
        if s.kind == NUMERIC:
            rng = f"({_fmt(s.min)},{_fmt(s.max)})"
            line = (f"- {name}: type=numerical, missing={100 * s.missing_ratio:.2f}%, "
                    f"mean={_fmt(s.mean)}, std={_fmt(s.std)}, range={rng}")
        else:
            line = (f"- {name}: type=categorical, missing={100 * s.missing_ratio:.2f}%, "
                    f"classes={s.cardinality}, top={list(s.top)}")
        if notes.get(name):
            line += f", note={notes[name]}"
        lines.append(line)
    return "\n".join(lines)


def build_prompt(ctx: ProposerContext) -> str:
    parts = [
        "(i) Task Description",
        f"Design one new feature-engineering step for the downstream {ctx.learner} model "
        f"({'classification' if ctx.schema.get(ctx.target) == CATEGORICAL else 'regression'} task). "
        "Scores are validation scores where larger is better. First explain your idea, "
        "then give the step in the operation language below.",
        "",
        "Reply in exactly this layout:",
        "--- Reason: why this step should help the model.",
        "--- Way:",
        "required_feature_columns = ['col_a', 'col_b']  (existing columns the step reads)",
        "Method: what the step does, column by column.",
        "--- Implementation:",
        "```json",
        '[{"kind": "<operation>", "params": {...}, "inputs": ["col_a"], "outputs": []}]',
        "```",
        "The JSON list holds one or more operations applied in order. Leave \"outputs\" empty to "
        "transform columns in place; name one output per input to add new columns instead. "
        "Operations and their parameters:",
        _dsl_reference(),
        "",
        "(ii) Dataset Information",
        ctx.dataset_info,
        "",
        "(iii) Ancestor FE pipeline",
        "Current Feature Engineering pipeline:",
    ]
    for i, step in enumerate(ctx.ancestors):
        parts.append("->")
        if i == 0:
            parts += ["[Do nothing]", f"  L Score: {step.score!r}"]
        else:
            parts += [f"[FE Operation {i}]", f"  |- Reason: {step.reason}",
                      f"  |- Way: {step.way}", f"  L Score: {step.score!r}"]
    parts.append("")
    if ctx.directive is Directive.EXPLOITATION:
        parts += ["(iv) Memory of good FE operations",
                  "High-performing historical FE operations (memory):"]
        if not ctx.memory:
            parts.append("(none recorded yet)")
        for i, entry in enumerate(ctx.memory, 1):
            parts += [f"[Good Operation {i}]", f"  |- Reason: {entry.reasoning}",
                      f"  |- Way: {entry.way}",
                      f"  L Score: {entry.v!r}, relative improve: {entry.dv!r}"]
        parts.append("")
    parts += [
        "(v) Directive and Optimization Objectives",
        "Objectives:",
        "1. Summarize what the ancestor pipeline has already done to the data.",
        "2. Do not repeat a step that is already in that pipeline.",
        "3. Propose exactly one new step: a generator, a selector, a transformation, "
        "a rescaler or an imputer.",
        f"4. Directive: {_DIRECTIVE_TEXT[ctx.directive]}",
    ]
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# reply parsing

_SECTION = re.compile(r"-{2,}\s*(Reason|Way|Implementation)\s*:", re.IGNORECASE)
_REQUIRED = re.compile(r"required_feature_columns\s*=\s*(\[[^\]]*\])", re.IGNORECASE | re.DOTALL)
_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def _sections(text: str) -> dict[str, str]:
    marks = list(_SECTION.finditer(text))
    out = {}
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        out.setdefault(m.group(1).lower(), text[m.end():end].strip())
    return out


def _json_block(text: str):
    for m in _FENCE.finditer(text):
        try:
            return json.loads(m.group(1))
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                obj, _ = decoder.raw_decode(text[i:])
            except json.JSONDecodeError:
                continue
            if isinstance(obj, list) or (isinstance(obj, dict) and ("kind" in obj or "operations" in obj)):
                return obj
    return None


def parse_proposal(text: str) -> tuple[Proposal | None, list[str]]:
    """Extract a Proposal from a raw reply.

    Returns ``(proposal, [])`` on success and ``(None, violations)`` otherwise;
    never raises.
    """
    violations = []
    sections = _sections(text)
    reason = sections.get("reason", "").strip()
    way = sections.get("way", "").strip()
    impl = sections.get("implementation", text)
    if not reason:
        violations.append("missing Reason section")

    required = None
    m = _REQUIRED.search(way or text)
    if m:
        try:
            value = ast.literal_eval(m.group(1))
            if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
                required = tuple(value)
        except (ValueError, SyntaxError):
            pass
    if required is None:
        violations.append("missing required_features: give required_feature_columns = [...] in the Way section")

    block = _json_block(impl)
    if block is None:
        violations.append("no operation block: put a JSON list of operations in the Implementation section")
        return None, violations
    if isinstance(block, dict):
        block = block.get("operations", [block])
    if not isinstance(block, list) or not block:
        violations.append("operation block must be a non-empty JSON list")
        return None, violations
    specs = []
    for i, obj in enumerate(block, 1):
        try:
            specs.append(OperationSpec.from_dict(obj))
        except OperationError as exc:
            violations.append(f"operation {i}: {exc}")
    if violations:
        return None, violations
    uncovered = [c for c in _external_inputs(specs) if c not in required]
    if uncovered:
        return None, [f"required_features does not cover operation inputs {uncovered}"]
    method = re.sub(_REQUIRED, "", way).strip() or "; ".join(s.describe() for s in specs)
    return Proposal(reason, required, method, tuple(specs)), []


def validate_proposal(proposal: Proposal, schema: Mapping[str, str], target: str | None = None) -> list[str]:
    out = [f"required feature {c!r} is not a column of the current dataset"
           for c in proposal.required_features if c not in schema]
    if target is not None and target in proposal.required_features:
        out.append(f"target column {target!r} cannot be used as a feature")
    out += validate_specs(proposal.op_specs, schema, target)
    return out


# ---------------------------------------------------------------------------
# backends

class ScriptedBackend:
    """Deterministic proposal source.

    Each call picks, with a seeded RNG, one script entry that is valid for the
    context's schema, preferring entries not already in the ancestor pipeline.
    With no valid entry it synthesizes a random valid operation.
    """

    def __init__(self, script: Sequence[Proposal] = (), seed: int = 0):
        self.script = list(script)
        self.rng = np.random.default_rng(seed)
        self.log: Callable[[dict], None] | None = None

    def propose(self, ctx: ProposerContext) -> Proposal:
        valid = [p for p in self.script if not validate_proposal(p, ctx.schema, ctx.target)]
        key = lambda specs: tuple(s.to_json() for s in specs)
        used = {key(a.op_specs) for a in ctx.ancestors}
        fresh = [p for p in valid if key(p.op_specs) not in used]
        pool = fresh or valid
        if not pool:
            return self.random_proposal(ctx)
        return pool[int(self.rng.integers(len(pool)))]

    def random_proposal(self, ctx: ProposerContext) -> Proposal:
        feats = [c for c in ctx.schema if c != ctx.target]
        num = [c for c in feats if ctx.schema[c] == NUMERIC]
        cat = [c for c in feats if ctx.schema[c] == CATEGORICAL]
        for _ in range(50):
            spec = self._random_spec(num, cat)
            if spec is None:
                break
            if not validate_specs([spec], ctx.schema, ctx.target):
                return Proposal(f"randomly drawn {spec.kind} step", _external_inputs([spec]),
                                spec.describe(), (spec,))
        spec = OperationSpec("drop_zero_variance")
        return Proposal("fallback cleanup step", (), spec.describe(), (spec,))

    def _random_spec(self, num: list[str], cat: list[str]) -> OperationSpec | None:
        rng = self.rng
        options = []
        if num:
            options += ["standard_scale", "minmax_scale", "signed_power", "clip_outliers", "unary", "bin", "impute"]
        if len(num) >= 2:
            options.append("arithmetic")
        if cat:
            options += ["one_hot", "frequency_encode", "target_encode"]
        if not options:
            return None
        kind = options[int(rng.integers(len(options)))]
        pick = lambda cols: cols[int(rng.integers(len(cols)))]
        if kind == "arithmetic":
            a, b = (num[i] for i in rng.choice(len(num), size=2, replace=False))
            op = ("add", "sub", "mul", "div")[int(rng.integers(4))]
            return OperationSpec(kind, {"op": op}, (a, b))
        if kind in ("one_hot", "frequency_encode", "target_encode"):
            return OperationSpec(kind, {}, (pick(cat),))
        col = pick(num)
        if kind == "unary":
            return OperationSpec(kind, {"fn": ("square", "abs", "sin", "cos")[int(rng.integers(4))]},
                                 (col,), (f"{col}_u{int(rng.integers(10**6))}",))
        return OperationSpec(kind, {}, (col,))


def _chat_url(base_url: str) -> str:
    base = base_url.rstrip("/")
    return base if base.endswith("/chat/completions") else base + "/chat/completions"


class LLMBackend:
    """Chat-completions HTTP backend with parse/validation retries.

    After ``max_attempts`` failed attempts the fallback backend supplies a
    random valid operation; without a fallback a :class:`ProposerError` is raised.
    """

    temperatures = {Directive.INITIALIZATION: 0.7, Directive.EXPLORATION: 0.7, Directive.EXPLOITATION: 0.3}

    def __init__(self, base_url: str, model: str, api_key: str = "", timeout: float = 60.0,
                 max_attempts: int = MAX_ATTEMPTS, fallback: ScriptedBackend | None = None,
                 client: Any = None):
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.fallback = fallback
        self._client = client
        self.log: Callable[[dict], None] | None = None

    @classmethod
    def from_env(cls, prefix: str = "JOINTFE_LLM_", **overrides) -> "LLMBackend":
        env = os.environ
        kwargs = dict(
            base_url=env.get(prefix + "BASE_URL", "https://api.openai.com/v1"),
            model=env.get(prefix + "MODEL", "gpt-4o-mini"),
            api_key=env.get(prefix + "API_KEY", env.get("OPENAI_API_KEY", "")),
            timeout=float(env.get(prefix + "TIMEOUT", 60)),
            max_attempts=int(env.get(prefix + "MAX_RETRIES", MAX_ATTEMPTS)),
        )
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    @property
    def client(self):
        if self._client is None:
            import httpx
            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def _emit(self, record: dict) -> None:
        if self.log is not None:
            self.log(record)

    def complete(self, messages: list[dict], temperature: float) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = self.client.post(_chat_url(self.base_url), headers=headers, timeout=self.timeout,
                                json={"model": self.model, "messages": messages, "temperature": temperature})
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def propose(self, ctx: ProposerContext) -> Proposal:
        prompt = build_prompt(ctx)
        temperature = self.temperatures[ctx.directive]
        last_problem = ""
        for attempt in range(1, self.max_attempts + 1):
            messages = [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": prompt}]
            self._emit({"type": "prompt", "attempt": attempt, "directive": ctx.directive.value, "prompt": prompt})
            try:
                reply = self.complete(messages, temperature)
            except Exception as exc:  # transport failures count as a failed attempt
                last_problem = f"endpoint error: {exc}"
                self._emit({"type": "reply_error", "attempt": attempt, "error": str(exc)})
                continue
            self._emit({"type": "reply", "attempt": attempt, "reply": reply})
            proposal, problems = parse_proposal(reply)
            if proposal is not None:
                problems = validate_proposal(proposal, ctx.schema, ctx.target)
            if not problems:
                return proposal
            last_problem = "; ".join(problems)
            self._emit({"type": "violation", "attempt": attempt, "violations": problems})
            prompt = (f"{prompt}\n\nYour previous reply was rejected: {last_problem}\n"
                      "Fix these problems and answer again in the required layout.")
        if self.fallback is None:
            raise ProposerError(f"no valid proposal after {self.max_attempts} attempts: {last_problem}")
        self._emit({"type": "fallback", "reason": last_problem})
        return self.fallback.random_proposal(ctx)


def propose(ctx: ProposerContext, backend) -> Proposal:
    return backend.propose(ctx)


def load_script(path: str) -> list[Proposal]:
    """Load a scripted-proposer file: a JSON list of proposal objects."""
    with open(path, encoding="utf-8") as fh:
        return [Proposal.from_dict(d) for d in json.load(fh)]
