import pytest

from apkattrib.apk.naming import (
    NamingConvention,
    builder_schemes,
    check_naming_convention,
    match_package_scheme,
    register_builder_scheme,
    registrable_domain,
)


@pytest.mark.parametrize(
    "package",
    ["com.andromo.dev271569.app366038", "net.andromo.dev1.app2"],
)
def test_andromo_scheme(package):
    assert match_package_scheme(package) == "andromo"


@pytest.mark.parametrize(
    "package",
    ["org.andromo.dev1.app2", "com.andromo.dev.app2", "com.andromo.dev1.app2.extra", "com.example.app"],
)
def test_not_andromo(package):
    assert match_package_scheme(package) is None


def test_register_scheme():
    register_builder_scheme("testbuilder", r"^io\.testbuilder\.[a-z]+$")
    try:
        assert match_package_scheme("io.testbuilder.radio") == "testbuilder"
        assert "testbuilder" in builder_schemes()
    finally:
        from apkattrib.apk import naming

        naming._BUILDER_SCHEMES.pop("testbuilder")


@pytest.mark.parametrize(
    "host, domain",
    [
        ("www.example.com", "example.com"),
        ("shop.example.co.uk", "example.co.uk"),
        ("example.com.au", "example.com.au"),
        ("localhost", None),
    ],
)
def test_registrable_domain(host, domain):
    assert registrable_domain(host) == domain


@pytest.mark.parametrize(
    "package, website, status",
    [
        ("com.example.notes", "https://www.example.com/apps", NamingConvention.MATCH),
        ("uk.co.example.notes", "example.co.uk", NamingConvention.MATCH),
        ("io.github.example", "https://example.com", NamingConvention.PARTIAL_MATCH),
        ("com.other.notes", "https://example.com", NamingConvention.NO_MATCH),
        ("com.example.notes", None, NamingConvention.NO_WEBSITE),
        ("com.example.notes", "  ", NamingConvention.NO_WEBSITE),
    ],
)
def test_naming_convention(package, website, status):
    assert check_naming_convention(package, website).status is status


def test_unparseable_website_flagged():
    verdict = check_naming_convention("com.example.notes", "http://[broken")
    assert verdict.status is NamingConvention.NO_MATCH
    assert verdict.unparseable_url
