from functools import lru_cache

from vidagent.frametool import FrameSelectCall
from vidagent.policy import GlobalThenZoom
from vidagent.policy.base import PolicyOutput
from vidagent.runtime import initial_state, step
from vidagent.video import MULTIPLE_CHOICE, OPEN_ENDED, generate_query, generate_video

VOCAB = ["the", "cat", "cats", "sat", "sits", "dog", "runs", "running", "a", "door", "opens", "2", "3"]


def random_text(rng, lo=0, hi=8):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


class Scripted:
    """Replays fixed round texts, repeating the last one forever."""

    name = "scripted-text"

    def __init__(self, *texts):
        self.texts = texts

    def act(self, state, seed):
        return PolicyOutput(self.texts[min(state.round_index, len(self.texts) - 1)])


class FixedJudge:
    name = "fixed-judge"

    def __init__(self, letter):
        self.letter = letter

    def judge(self, question, observations):
        return self.letter


def call_text(*args):
    return "Plan: look.\n" + FrameSelectCall(*args).envelope()


@lru_cache(maxsize=8)
def sample_states(n, seed=0):
    """Belief states at rounds 0-2 drawn from scripted rollouts."""
    out = []
    i = 0
    while len(out) < n:
        s = seed + i
        v = generate_video(s)
        q = generate_query(v, s, MULTIPLE_CHOICE if i % 3 == 0 else OPEN_ENDED)
        state = initial_state(v, q)
        out.append(state)
        teacher = GlobalThenZoom() if i % 2 else GlobalThenZoom(global_nframes=4, global_resize=0.1)
        for _ in range(2):
            state, rnd = step(state, teacher, v)
            if rnd.executed_call is None:
                break
            out.append(state)
        i += 1
    return tuple(out[:n])
