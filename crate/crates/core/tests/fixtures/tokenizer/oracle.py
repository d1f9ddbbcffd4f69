"""Reference term splitter for the retrieval tokenizer.

Reads cases.json (a list of input strings) and writes expected.json with
each input and its term list.
"""
import json
import pathlib
import re

STOPWORDS = set("""
an and are as at be been but by can could did do does for from had has have
he her his how if in into is it its not of on or our she so than that the
their them they this to was we were what will with
""".split())


def terms(text):
    out = []
    for run in re.findall(rb"[a-z0-9]+", text.encode("utf-8").lower()):
        word = run.decode("ascii")
        if len(word) >= 2 and word not in STOPWORDS:
            out.append(word)
    return out


def main():
    here = pathlib.Path(__file__).parent
    inputs = json.loads((here / "cases.json").read_text(encoding="utf-8"))
    cases = [{"input": text, "terms": terms(text)} for text in inputs]
    out = json.dumps(cases, indent=1, ensure_ascii=False) + "\n"
    (here / "expected.json").write_text(out, encoding="utf-8")


if __name__ == "__main__":
    main()
