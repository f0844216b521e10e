"""Setup script for irfield package."""

from setuptools import setup, find_packages

setup(
    name="irfield",
    packages=find_packages(include=["irfield", "irfield.*"]),
    package_data={
        "irfield": ["py.typed"],
    },
    include_package_data=True,
)
