"""Template rendering, mock backend, and confidence estimation."""

import pytest
from hypothesis import given, strategies as st

from svworkbench.errors import BackendError, BackendTimeout, MockFixtureMissing, TemplateError
from svworkbench.gateway import (
    ChatRequest,
    PromptTemplate,
    estimate_confidence,
    placeholders,
    render_template,
    stable_hash64,
)


class TestRenderTemplate:
    def test_simple_substitution(self):
        t = PromptTemplate("t", "Analyze {design}")
        assert render_template(t, {"design": "fsm.v"}) == "Analyze fsm.v"

    def test_no_placeholders_identity(self):
        t = PromptTemplate("t", "static body, no slots")
        assert render_template(t, {}) == "static body, no slots"

    def test_extra_variables_ignored(self):
        t = PromptTemplate("t", "Analyze {design}")
        assert render_template(t, {"design": "a.v", "unused": "x"}) == "Analyze a.v"

    def test_missing_variable(self):
        t = PromptTemplate("t", "Analyze {design} for {bug}")
        with pytest.raises(TemplateError):
            render_template(t, {"design": "a.v"})

    def test_brace_escape(self):
        t = PromptTemplate("t", "literal {{braces}} and {real}")
        assert render_template(t, {"real": "value"}) == "literal {braces} and value"

    def test_required_variables_computed(self):
        t = PromptTemplate("t", "{a} then {b} then {a}")
        assert t.required_variables == ["a", "b"]

    @given(st.dictionaries(
        st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True),
        st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=20),
        max_size=4,
    ))
    def test_totality_no_placeholder_survives(self, variables):
        body = " and ".join("{%s}" % name for name in variables) or "empty"
        t = PromptTemplate("t", body)
        rendered = render_template(t, variables)
        assert not placeholders(rendered)


class TestEstimateConfidence:
    def test_explicit_marker(self):
        assert estimate_confidence("verdict: ok\nconfidence: 0.9") == 0.9

    def test_default_when_absent(self):
        assert estimate_confidence("no marker here") == 0.5

    def test_clamped(self):
        assert estimate_confidence("confidence: 1.7") == 1.0


class TestMockBackend:
    def test_fixture_lookup(self, bench):
        bench.writer.add("intent_detect", "category: security_qa\nmode: informational\nin_domain: yes",
                         variables={"query": "q", "attachment_kinds": "none"})
        response = bench.gateway.complete("mock", ChatRequest(
            template_id="intent_detect",
            variables={"query": "q", "attachment_kinds": "none"},
        ))
        assert response.text.startswith("category: security_qa")

    def test_missing_variable_raises(self, bench):
        with pytest.raises(TemplateError):
            bench.gateway.complete("mock", ChatRequest(
                template_id="intent_detect", variables={"query": "q"},
            ))

    def test_unknown_backend(self, bench):
        with pytest.raises(BackendError):
            bench.gateway.complete("gpt-x", ChatRequest(template_id="intent_detect", variables={}))

    def test_missing_fixture_names_key(self, bench):
        with pytest.raises(MockFixtureMissing) as exc:
            bench.gateway.complete("mock", ChatRequest(
                template_id="intent_detect",
                variables={"query": "unscripted", "attachment_kinds": "none"},
            ))
        assert exc.value.template_id == "intent_detect"

    def test_mock_determinism(self, bench):
        variables = {"query": "same", "attachment_kinds": "none"}
        bench.writer.add("intent_detect", "category: security_qa\nin_domain: yes",
                         variables=variables)
        request = ChatRequest(template_id="intent_detect", variables=variables)
        first = bench.gateway.complete("mock", request)
        for _ in range(5):
            again = bench.gateway.complete("mock", request)
            assert again.text == first.text
            assert again.token_usage == first.token_usage

    def test_fifo_consumption_then_repeat(self, bench):
        variables = {"query": "seq", "attachment_kinds": "none"}
        bench.writer.add("intent_detect", "first", variables=variables)
        bench.writer.add("intent_detect", "second", variables=variables)
        request = ChatRequest(template_id="intent_detect", variables=variables)
        gw = bench.gateway
        assert gw.complete("mock", request).text == "first"
        assert gw.complete("mock", request).text == "second"
        assert gw.complete("mock", request).text == "second"

    def test_scripted_timeout(self, bench):
        variables = {"query": "boom", "attachment_kinds": "none"}
        bench.writer.add("intent_detect", "", variables=variables, error="timeout")
        with pytest.raises(BackendTimeout):
            bench.gateway.complete("mock", ChatRequest(
                template_id="intent_detect", variables=variables,
            ))

    def test_confidence_parsed_from_body(self, bench):
        variables = {"query": "c", "attachment_kinds": "none"}
        bench.writer.add("intent_detect", "category: security_qa\nconfidence: 0.25",
                         variables=variables)
        response = bench.gateway.complete("mock", ChatRequest(
            template_id="intent_detect", variables=variables,
        ))
        assert response.confidence == 0.25

    def test_prompt_log_records_rendered_prompt(self, bench):
        variables = {"query": "logme", "attachment_kinds": "none"}
        bench.writer.add("intent_detect", "category: security_qa", variables=variables)
        gw = bench.gateway
        gw.prompt_log = []
        gw.complete("mock", ChatRequest(template_id="intent_detect", variables=variables))
        assert len(gw.prompt_log) == 1
        assert "logme" in gw.prompt_log[0][2]


class TestFixtureFileFormat:
    def test_entry_file_shape(self, bench):
        path = bench.writer.add("chat_answer", "grounded reply",
                                variables={"query": "q", "evidence": "e"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# template: chat_answer"
        assert lines[1].startswith("# prompt-hash: ")
        assert lines[2] == "grounded reply"

    def test_hash_is_stable_64_bit(self):
        h = stable_hash64("some prompt")
        assert len(h) == 16
        assert h == stable_hash64("some prompt")
        assert h != stable_hash64("some prompt!")


class TestRemoteRetry:
    def test_retry_uses_identical_body_and_gives_up(self, monkeypatch):
        from svworkbench.gateway import RemoteBackend
        import httpx

        bodies = []

        def fake_post(url, content=None, headers=None, timeout=None):
            bodies.append(content)
            raise httpx.ConnectTimeout("slow")

        monkeypatch.setattr(httpx, "post", fake_post)
        backend = RemoteBackend(url="http://localhost:1/v1/chat", max_retries=2)
        with pytest.raises(BackendTimeout):
            backend.complete("t", "prompt body", ChatRequest(template_id="t", variables={}))
        assert len(bodies) == 3
        assert len(set(bodies)) == 1

    def test_4xx_no_retry(self, monkeypatch):
        from svworkbench.gateway import RemoteBackend
        import httpx

        calls = []

        def fake_post(url, content=None, headers=None, timeout=None):
            calls.append(1)
            request = httpx.Request("POST", url)
            return httpx.Response(status_code=401, request=request, text="denied")

        monkeypatch.setattr(httpx, "post", fake_post)
        backend = RemoteBackend(url="http://localhost:1/v1/chat")
        with pytest.raises(BackendError):
            backend.complete("t", "prompt", ChatRequest(template_id="t", variables={}))
        assert len(calls) == 1
