"""Reference sentence splitter used to produce fixtures/segmentation.json.

Rule: cut after a terminator in `. ! ? ; 。 ！ ？ ；` when the next character
is whitespace or the end of the text. Runs of terminators stay together.
Fragments are stripped; empty fragments are dropped.
"""
import json
import sys

TERMINATORS = set(".!?;。！？；")


def segment(text):
    out, start = [], 0
    for i, ch in enumerate(text):
        if ch not in TERMINATORS:
            continue
        nxt = text[i + 1] if i + 1 < len(text) else None
        if nxt is None or nxt.isspace():
            out.append(text[start:i + 1])
            start = i + 1
    out.append(text[start:])
    return [s.strip() for s in out if s.strip()]


CASES = [
    "A b. C d!",
    "One sentence without terminator",
    "Hi?! Ok.",
    "   leading and trailing spaces.   ",
    "Dr. Smith arrived. He sat down.",
    "e.g. this stays glued.",
    "Wait... what? Really!",
    "First;second; third",
    "Tabs\tsplit.\tToo.",
    "Line one.\nLine two.\r\nLine three",
    "Numbers like 3.14 stay. Right?",
    "你好。 我很好。",
    "你好。我很好。",
    "全角！ 问号？ 分号； 结束",
    "Ends with terminator run!!!",
    "Quote \"inside.\" Then more.",
    "a.b.c",
    "x . y",
    "Multiple   spaces.   Collapse    later.",
    "?!. leading terminators. Next",
]

if __name__ == "__main__":
    cases = [{"text": t, "sentences": segment(t)} for t in CASES]
    json.dump(cases, sys.stdout, ensure_ascii=False, indent=2)
    sys.stdout.write("\n")
