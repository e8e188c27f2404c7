"""Instruction text generation and tokenization.

Two instruction streams exist: policy-based text names the next action the
agent could take; state-based text describes the target number, the placed
counts, and the carried block. Both repeat the number in words every step
so a single instruction fully determines the relevant state.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .env import BlockKind, EnvState, digits_of, oracle_action, Status

PAD_ID = 0
UNK_ID = 1

POLICY_BASED = "policy"
STATE_BASED = "state"
NO_LANGUAGE = "none"
INSTRUCTION_MODES = (POLICY_BASED, STATE_BASED, NO_LANGUAGE)

_ONES = ["", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
_TEENS = ["ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
          "sixteen", "seventeen", "eighteen", "nineteen"]
_TENS = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy",
         "eighty", "ninety"]

_BLOCK_NOUN = {BlockKind.HUNDRED: "hundred", BlockKind.TEN: "ten", BlockKind.UNIT: "unit"}
_PLACE_NOUN = {BlockKind.HUNDRED: "hundreds", BlockKind.TEN: "tens", BlockKind.UNIT: "units"}


def number_to_words(n: int) -> str:
    """English words for n in [1, 999], lowercase, hyphens as spaces."""
    if not 1 <= n <= 999:
        raise ValueError(f"number must be in [1, 999], got {n}")
    h, rest = divmod(n, 100)
    parts: List[str] = []
    if h:
        parts.append(f"{_ONES[h]} hundred")
        if rest:
            parts.append("and")
    if rest:
        if rest < 10:
            parts.append(_ONES[rest])
        elif rest < 20:
            parts.append(_TEENS[rest - 10])
        else:
            t, u = divmod(rest, 10)
            parts.append(_TENS[t] if u == 0 else f"{_TENS[t]} {_ONES[u]}")
    return " ".join(parts)


def policy_instruction(state: EnvState) -> str:
    words = number_to_words(state.target)
    if state.status != Status.RUNNING:
        return f"this is {words} . you are done"
    if state.carried is not None:
        noun = _BLOCK_NOUN[state.carried]
        return f"this is {words} . place the {noun} block in the {_PLACE_NOUN[state.carried]} place"
    kind = oracle_action(state).kind
    return f"this is {words} . pick up a {_BLOCK_NOUN[kind]} block"


def _count_phrase(count: int) -> str:
    if count == 0:
        return "no blocks"
    if count == 1:
        return "one block"
    return f"{_ONES[count]} blocks"


def state_instruction(state: EnvState) -> str:
    words = number_to_words(state.target)
    p_h, p_t, p_u = state.placed
    counts = (
        f"there are {_count_phrase(p_h)} in the hundreds place , "
        f"{_count_phrase(p_t)} in the tens place and "
        f"{_count_phrase(p_u)} in the units place ."
    )
    if state.carried is not None:
        held = f"you are holding a {_BLOCK_NOUN[state.carried]} block"
    else:
        held = "you are not holding any block"
    return f"this is {words} . {counts} {held}"


def reachable_triples(target: int) -> Iterator[Tuple[Tuple[int, int, int], Optional[BlockKind]]]:
    """All (placed, carried) combinations reachable for a target: any
    placed <= digits with free hands, plus carried=k whenever a k-slot
    remains open (a block is only picked while it is still needed)."""
    h, t, u = digits_of(target)
    for placed in itertools.product(range(h + 1), range(t + 1), range(u + 1)):
        yield placed, None
        for kind in BlockKind:
            if placed[kind] < (h, t, u)[kind]:
                yield placed, kind


def _state_at(target: int, placed: Tuple[int, int, int], carried: Optional[BlockKind]) -> EnvState:
    from .env import new_episode
    from dataclasses import replace

    state = new_episode(target)
    status = Status.SOLVED if (placed == state.digits and carried is None) else Status.RUNNING
    return replace(state, placed=placed, carried=carried, status=status)


def state_at(target: int, placed: Tuple[int, int, int],
             carried: Optional[BlockKind] = None) -> EnvState:
    """Build the reachable state with the given placement/carry (test and
    sweep helper; not part of normal episode flow)."""
    return _state_at(target, placed, carried)


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]       # includes the PAD/UNK slots at ids 0/1
    max_seq_len: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)


@dataclass(frozen=True)
class TokenSeq:
    ids: np.ndarray               # int64, fixed length max_seq_len
    true_len: int


def _normalize(text: str) -> List[str]:
    out = text.lower()
    for punct in (".", ","):
        out = out.replace(punct, f" {punct} ")
    return out.split()


def _all_instruction_texts() -> Iterator[str]:
    for target in range(1, 1000):
        for placed, carried in reachable_triples(target):
            state = _state_at(target, placed, carried)
            yield policy_instruction(state)
            yield state_instruction(state)


@functools.lru_cache(maxsize=1)
def build_vocabulary() -> Vocabulary:
    """Enumerate every instruction generable from any reachable state of
    any target and derive the closed token set and maximum length."""
    seen: Dict[str, None] = {}
    max_len = 0
    for text in _all_instruction_texts():
        words = _normalize(text)
        max_len = max(max_len, len(words))
        for w in words:
            seen[w] = None
    tokens = ("<pad>", "<unk>") + tuple(sorted(seen))
    return Vocabulary(tokens=tokens, max_seq_len=max_len)


def tokenize(text: str, vocab: Vocabulary) -> TokenSeq:
    words = _normalize(text)
    if len(words) > vocab.max_seq_len:
        raise ValueError(f"text has {len(words)} tokens, max is {vocab.max_seq_len}")
    ids = np.full(vocab.max_seq_len, PAD_ID, dtype=np.int64)
    for i, w in enumerate(words):
        ids[i] = vocab.id_of(w)
    return TokenSeq(ids=ids, true_len=len(words))


def detokenize(seq: TokenSeq, vocab: Vocabulary) -> str:
    return " ".join(vocab.tokens[i] for i in seq.ids[: seq.true_len])


def instruction_text(state: EnvState, mode: str) -> str:
    if mode == POLICY_BASED:
        return policy_instruction(state)
    if mode == STATE_BASED:
        return state_instruction(state)
    if mode == NO_LANGUAGE:
        return ""
    raise ValueError(f"unknown instruction mode {mode!r}")
