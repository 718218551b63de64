import os
from setuptools import setup

here = os.path.abspath(os.path.dirname(__file__))
with open(os.path.join(here, "README.md"), encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="chord-lab",
    version="0.1.0",
    description="Phase-space (Wigner / chord) simulator for Markovian open quantum systems",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.9",
    packages=["simulator", "oracle", "utils"],
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "pandas>=1.4",
        "python-dotenv>=0.21",
        "celery>=5.2",
        "redis>=4.3",
    ],
    extras_require={"test": ["pytest>=7"]},
    entry_points={"console_scripts": ["chord-lab=simulator.cli:main"]},
)
