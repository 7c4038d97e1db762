from __future__ import annotations

import threading
from pathlib import Path

import pytest

from domainflow.deployment import Deployment
from domainflow.engine import Engine
from domainflow.server import App, make_server

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"

# Toy domain and flows used by the scheduler and parallelism tests.
TOY_DOMAIN = """
domain toy

type thing {
  tv: String label "Value"
}

service thing-store {
  kind builtin-store
  type thing
}

activity step {
  kind compute
  input a: Integer label "In"
  output r: Integer label "Out"
}

activity join {
  kind compute
  input x: Integer label "X"
  input y: Integer label "Y"
  output u: Integer label "U"
  output v: Integer label "V"
}

activity put-thing {
  kind service
  service thing-store
  input tv: String label "Value"
  output rec: thing label "Stored"
}
"""

DIAMOND_FLOW = """
flow diamond
import toy

var total: Integer label "Total" = 0

start s
end e

activity b = toy.put-thing {
  input tv = "left"
}
activity c = toy.put-thing {
  input tv = "right"
}
activity d = toy.join {
  input x = b.rec.id
  input y = c.rec.id
  set total = u + v
}

s -> b
s -> c
b -> d
c -> d
d -> e
"""

TWO_START_FLOW = """
flow twostart
import toy

start s1
start s2
end e1
end e2

activity p = toy.step {
  input a = 1
}
activity q = toy.step {
  input a = 2
}

s1 -> p
s2 -> q
p -> e1
q -> e2
"""

EMPTY_FLOW = """
flow empty
import toy

start s
end e

s -> e
"""


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def _first_keyword(text: str) -> str:
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return line.split(None, 1)[0]
    return ""


def make_deployment(*sources: str, data_dir=None, mode: str = "production") -> Deployment:
    """Deploy the given DSL sources (domains before flows) or fail loudly."""
    dep = Deployment(data_dir)
    for text in sources:
        if _first_keyword(text) == "domain":
            diags = dep.deploy_domain(text)
        else:
            diags = dep.deploy_flow(text, mode)
        assert not diags, [str(d) for d in diags]
    return dep


def seed_articles(engine: Engine, titles_bodies_tags) -> None:
    """Feed articles through the post-article flow, the only write path."""
    from domainflow.coordination import InteractionResponse

    for title, body, tags in titles_bodies_tags:
        inst = engine.create_instance("post-article")
        engine.run_until_blocked(inst)
        violations = engine.apply_response(
            inst.instance_id,
            InteractionResponse(inst.instance_id, {"title": title, "body": body, "tags": tags}),
        )
        assert not violations and inst.status == "finished", (inst.status, violations, inst.failure)


SEED_ARTICLES = [
    ("How to create the behavior model", "A short *guide*.", ["guide"]),
    ("Decoupling clients from logic", "Payloads carry **data**, not markup.", ["design"]),
    ("Reusable activities", "Assemble flows from a library.", ["design", "reuse"]),
    ("Sandbox debugging", "Inspect and patch live instances.", ["tooling"]),
    ("Paging through records", "Offset and limit.", ["storage"]),
    ("Markdown in ten lines", "# Small\n\nRenderers can be tiny.", ["tooling"]),
]


@pytest.fixture
def conduit_engine(tmp_path):
    dep = make_deployment(
        fixture_text("conduit.domain"),
        fixture_text("articles.flow"),
        fixture_text("post-article.flow"),
        data_dir=tmp_path,
    )
    return Engine(dep, tmp_path)


@pytest.fixture
def guessing_engine(tmp_path):
    dep = make_deployment(
        fixture_text("guessing.domain"), fixture_text("guessing.flow"), data_dir=tmp_path
    )
    return Engine(dep, tmp_path)


class LiveServer:
    def __init__(self, app: App):
        self.app = app
        self.server = make_server(app)
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(App(data_dir=tmp_path / "data"))
    yield server
    server.stop()
