import json

import pytest

from domainflow.cli import main

from conftest import FIXTURES
from test_server import call, deploy_guessing


def test_validate_fixtures_exit_zero(capsys):
    paths = [str(FIXTURES / name) for name in (
        "conduit.domain", "guessing.domain", "articles.flow", "post-article.flow", "guessing.flow",
    )]
    assert main(["validate", *paths]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_empty_file_fails(capsys):
    assert main(["validate", "/dev/null"]) == 1
    assert "empty domain" in capsys.readouterr().err


def test_validate_flow_without_domain_fails(capsys):
    assert main(["validate", str(FIXTURES / "guessing.flow")]) == 1
    assert "unknown domain" in capsys.readouterr().err


def test_validate_missing_file_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["validate", str(FIXTURES / "nope.domain")])
    assert exc.value.code == 2


def test_deploy_and_list_instances(live_server, capsys):
    code = main([
        "deploy", "--server", live_server.base, "--sandbox",
        str(FIXTURES / "guessing.domain"), str(FIXTURES / "guessing.flow"),
    ])
    assert code == 0
    call(live_server.base, "POST", "/flows/guessing/instances")

    assert main(["flows", "--server", live_server.base]) == 0
    assert "guessing\tsandbox" in capsys.readouterr().out

    assert main(["instances", "--server", live_server.base, "--status", "awaiting-client"]) == 0
    out = capsys.readouterr().out
    assert "guessing" in out and "awaiting-client" in out and "sandbox" in out


def test_deploy_invalid_file_reports_diagnostics(live_server, tmp_path, capsys):
    bad = tmp_path / "bad.domain"
    bad.write_text("domain d\n\nbroken {\n}\n", encoding="utf-8")
    assert main(["deploy", "--server", live_server.base, str(bad)]) == 1
    assert "unexpected line" in capsys.readouterr().err


def test_inspect_and_patch(live_server, capsys):
    deploy_guessing(live_server, mode="sandbox")
    _, data, _ = call(live_server.base, "POST", "/flows/guessing/instances")
    iid = json.loads(data)["instanceId"]

    assert main(["patch", str(iid), "variables.secret", "9", "--server", live_server.base]) == 0
    capsys.readouterr()
    assert main(["inspect", str(iid), "--server", live_server.base]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["variables"]["secret"] == 9
    assert doc["status"] == "awaiting-client"


def test_patch_production_instance_fails(live_server, capsys):
    deploy_guessing(live_server)
    _, data, _ = call(live_server.base, "POST", "/flows/guessing/instances")
    iid = json.loads(data)["instanceId"]
    assert main(["patch", str(iid), "variables.secret", "9", "--server", live_server.base]) == 1
    assert "not in sandbox" in capsys.readouterr().err


def test_run_subcommand_drives_terminal_client(live_server, capsys, monkeypatch):
    import io

    deploy_guessing(live_server)
    monkeypatch.setattr("sys.stdin", io.StringIO("5\ny\n"))
    assert main(["run", "--server", live_server.base, "--flow", "guessing"]) == 0
    assert "Flow finished." in capsys.readouterr().out
