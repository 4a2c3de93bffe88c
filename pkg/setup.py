import setuptools

from stap_glm.get_version import git_tag, git_revision, version

with open("requirements.txt") as reqs:
    install_requires = reqs.read().splitlines()

with open("dev-requirements.txt") as reqs:
    extras_require = {"dev": reqs.read().splitlines()}

try:
    long_desc = open("README.md").read()
except IOError:
    long_desc = "Failed to read README.md"

with open("stap_glm/version.py", "w") as version_file:
    version_file.write(f"""# Generated in setup.py

git_tag = {git_tag!r}
git_revision = {git_revision!r}
version = {version!r}
""")

setuptools.setup(
    name="stap-glm",
    version=version,

    author="stap-glm contributors",

    description="Bayesian spatial-temporal aggregated predictor regression with a NUTS sampler.",
    long_description=long_desc,
    long_description_content_type="text/markdown",

    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),

    install_requires=install_requires,
    extras_require=extras_require,
    python_requires="~=3.8",

    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: GNU Affero General Public License v3 or later (AGPLv3+)",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
    package_data={"stap_glm": [
        "example-config.yaml",
    ]},
    data_files=[
        (".", ["stap_glm/example-config.yaml"]),
    ],
    entry_points={
        "console_scripts": ["stap-glm=stap_glm.__main__:main"],
    },
)
