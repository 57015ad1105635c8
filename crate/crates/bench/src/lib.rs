//! Benchmark inputs: the fixture corpus and a synthetic application that
//! scales with the number of controllers.

pub const FIXTURES: [(&str, &str); 7] = [
    ("fix1", include_str!("../../../fixtures/fix1.rlite")),
    ("fix2", include_str!("../../../fixtures/fix2.rlite")),
    ("fix3", include_str!("../../../fixtures/fix3.rlite")),
    ("fix4", include_str!("../../../fixtures/fix4.rlite")),
    ("fix5", include_str!("../../../fixtures/fix5.rlite")),
    ("fix6", include_str!("../../../fixtures/fix6.rlite")),
    ("fix7", include_str!("../../../fixtures/fix7.rlite")),
];

/// A blog-like application with `controllers` controllers of three
/// linked actions each.
pub fn synthetic_app(controllers: usize) -> String {
    let mut src = String::from(
        "model Author {
  field name: string(64)
  field group_id: int
}

model Post {
  field title: string(128)
  field body: text
  field author_id: int
  field state: string(16)
  belongs_to author: Author key author_id
}
",
    );
    for c in 0..controllers {
        src.push_str(&format!(
            "
controller Posts{c} {{
  action index(page) {{
    let posts = Post.where(state == \"live\").includes(author).order(title).limit(20).offset(param(:page))
    for p in posts {{
      render(p.title, p.author.name)
      link_to Posts{c}.show(id: p.id)
    }}
    link_to Posts{c}.index(page: param(:page) + 20)
  }}

  action show(id) {{
    let post = Post.find(param(:id))
    let authors = Author.where(group_id == 1)
    let mine = Post.where(author_id in authors.id)
    if mine.any {{
      render(post)
    }}
    form_to Posts{c}.edit(id: post.id, title)
  }}

  action edit POST (id, title) {{
    let post = Post.find(param(:id))
    post.title = param(:title)
    post.state = \"draft\"
    post.save
    link_to Posts{c}.index(page: 0)
  }}
}}
"
        ));
    }
    src
}
