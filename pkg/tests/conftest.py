import sys
from pathlib import Path

import pytest

from emochurn.corpus import DAY, Channel, Corpus, Message
from emochurn.sentiment import SentimentScore

sys.path.insert(0, str(Path(__file__).parent))

T0 = 1_199_145_600   # 2008-01-01 UTC


def msg(mid, author="alice", t=0, disc="1", p=None, n=None, chan=Channel.BUG_TRACKER, text="", days=False):
    ts = T0 + int(round(t * DAY)) if days else t
    score = SentimentScore(p, n) if p is not None else None
    return Message(str(mid), author, ts, str(disc), chan, text, score)


def corpus_of(messages, channel=None):
    return Corpus.from_messages(messages, channel)


@pytest.fixture
def tmp(tmp_path):
    return tmp_path
