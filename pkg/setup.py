"""
Package setup configuration for gwgames
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh
                    if line.strip() and not line.startswith("#") and not line.startswith("pytest")]

setup(
    name="gwgames",
    version="1.0.0",
    author="gwgames contributors",
    description="Normal, misère and escape games on Galton-Watson trees",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    py_modules=["main"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={"test": ["pytest>=7.4.0"]},
    entry_points={
        "console_scripts": [
            "gwgames=main:main",
        ],
    },
    keywords="galton-watson branching-process combinatorial-games fixed-points phase-transition",
)
